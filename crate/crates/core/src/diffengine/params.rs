use std::ops::Range;

use crate::error::{NovaError, Result};

/// Every trainable scalar of a model in one flat buffer, with named ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    index: Vec<(String, Range<usize>)>,
}

impl ParameterVector {
    /// Ranges must be disjoint and, in order, cover `values` exactly.
    pub fn new(values: Vec<f64>, index: Vec<(String, Range<usize>)>) -> Result<Self> {
        let mut cursor = 0;
        for (name, range) in &index {
            if range.start != cursor || range.end < range.start {
                return Err(NovaError::InvalidInput(format!(
                    "parameter range {name} ({range:?}) is not contiguous at {cursor}"
                )));
            }
            cursor = range.end;
        }
        if cursor != values.len() {
            return Err(NovaError::InvalidInput(format!(
                "parameter ranges cover {cursor} of {} values",
                values.len()
            )));
        }
        Ok(ParameterVector { values, index })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.index.iter().map(|(n, _)| n.as_str())
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.index.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.range(name).map(|r| &self.values[r])
    }

    /// Name of the range containing flat index `i`.
    pub fn name_of(&self, i: usize) -> Option<&str> {
        self.index.iter().find(|(_, r)| r.contains(&i)).map(|(n, _)| n.as_str())
    }
}
