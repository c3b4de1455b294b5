//! A trained scene: one static field plus one dynamic field per object, and
//! the checkpoint container.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "NOVACKPT"
//! u32       format version
//! u32       header length in bytes
//! ...       JSON header: {"step", "fields": [FieldArch...], "param_counts"}
//! u64       total parameter count
//! f64 * n   parameters, fields concatenated in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SceneConfig;
use crate::diffengine::ParameterVector;
use crate::error::{NovaError, Result};
use crate::fields::{named_ranges, FieldArch, FieldKind, ObjectInstance, RadianceField};
use crate::renderer::SceneElement;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NOVACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    /// `fields[0]` is static; `fields[1 + i]` models object `i`.
    pub fields: Vec<RadianceField>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    step: u64,
    fields: Vec<FieldArch>,
    param_counts: Vec<usize>,
}

impl SceneModel {
    /// Fresh model for `objects` dynamic objects. Field `i` is seeded from
    /// `seed` and its index.
    pub fn new(config: &SceneConfig, objects: usize, seed: u64) -> Result<Self> {
        let mut fields = Vec::with_capacity(objects + 1);
        fields.push(RadianceField::new(config.field.arch(FieldKind::Static), field_seed(seed, 0))?);
        for i in 0..objects {
            fields.push(RadianceField::new(config.field.arch(FieldKind::Dynamic), field_seed(seed, i + 1))?);
        }
        Ok(SceneModel { fields })
    }

    pub fn static_field(&self) -> &RadianceField {
        &self.fields[0]
    }

    pub fn object_count(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn object_field(&self, index: usize) -> Result<&RadianceField> {
        self.fields.get(index + 1).ok_or_else(|| {
            NovaError::InvalidInput(format!("object index {index} out of range ({} objects)", self.object_count()))
        })
    }

    pub fn archs(&self) -> Vec<FieldArch> {
        self.fields.iter().map(|f| f.arch().clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.fields.iter().map(|f| f.param_count()).sum()
    }

    /// Start offset of each field in the flat parameter vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.fields
            .iter()
            .map(|f| {
                let o = acc;
                acc += f.param_count();
                o
            })
            .collect()
    }

    pub fn parameters(&self) -> ParameterVector {
        let mut values = Vec::with_capacity(self.param_count());
        let mut index = Vec::new();
        for (i, f) in self.fields.iter().enumerate() {
            let prefix = if i == 0 { "static".to_string() } else { format!("object{}", i - 1) };
            index.extend(named_ranges(&prefix, f, values.len()));
            values.extend_from_slice(f.params());
        }
        ParameterVector::new(values, index).expect("layout ranges are contiguous")
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(NovaError::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut at = 0;
        for f in &mut self.fields {
            let n = f.param_count();
            f.params_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Render participants: the static field with blending factor
    /// `static_beta`, then every object at its trained pose.
    pub fn elements(&self, static_beta: f64) -> Result<Vec<SceneElement<'_>>> {
        let mut out = vec![SceneElement::Static {
            field: self.static_field(),
            beta: static_beta,
        }];
        for f in &self.fields[1..] {
            out.push(SceneElement::Object(ObjectInstance::identity(f)?));
        }
        Ok(out)
    }

    pub fn to_bytes(&self, step: u64) -> Vec<u8> {
        let header = Header {
            step,
            fields: self.archs(),
            param_counts: self.fields.iter().map(|f| f.param_count()).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(24 + json.len() + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.param_count() as u64).to_le_bytes());
        for f in &self.fields {
            for p in f.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint, returning the model and its training step.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, u64)> {
        let bad = |m: &str| NovaError::CheckpointMismatch(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(NovaError::CheckpointMismatch(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = 16 + hlen;
        if bytes.len() < body + 8 {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&bytes[16..body]).map_err(|e| NovaError::CheckpointMismatch(e.to_string()))?;
        let count = u64::from_le_bytes(bytes[body..body + 8].try_into().unwrap()) as usize;
        if bytes.len() != body + 8 + 8 * count {
            return Err(bad("parameter block length does not match its count"));
        }
        if header.fields.len() != header.param_counts.len() || header.param_counts.iter().sum::<usize>() != count {
            return Err(bad("header parameter counts are inconsistent"));
        }
        if header.fields.first().map(|a| a.kind) != Some(FieldKind::Static)
            || header.fields[1..].iter().any(|a| a.kind != FieldKind::Dynamic)
        {
            return Err(bad("expected one static field followed by dynamic fields"));
        }
        let mut values = bytes[body + 8..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        let mut fields = Vec::with_capacity(header.fields.len());
        for (arch, &n) in header.fields.into_iter().zip(&header.param_counts) {
            fields.push(RadianceField::from_params(arch, values.by_ref().take(n).collect())?);
        }
        Ok((SceneModel { fields }, header.step))
    }

    pub fn save(&self, path: &Path, step: u64) -> Result<()> {
        fs::write(path, self.to_bytes(step)).map_err(|e| NovaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let bytes = fs::read(path).map_err(|e| NovaError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| NovaError::CheckpointMismatch(format!("{}: {e}", path.display())))
    }

    /// Loads a checkpoint and checks that its fields match the architecture
    /// `config` describes for `objects` objects.
    pub fn load_for(path: &Path, config: &SceneConfig, objects: usize) -> Result<(Self, u64)> {
        let (model, step) = Self::load(path)?;
        let expected = std::iter::once(config.field.arch(FieldKind::Static))
            .chain(std::iter::repeat_n(config.field.arch(FieldKind::Dynamic), objects))
            .collect::<Vec<_>>();
        let found = model.archs();
        if found != expected {
            return Err(NovaError::CheckpointMismatch(format!(
                "{}: checkpoint holds {} field(s) {:?}, config expects {} field(s) {:?}",
                path.display(),
                found.len(),
                found.first(),
                expected.len(),
                expected.first()
            )));
        }
        Ok((model, step))
    }
}

fn field_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}
