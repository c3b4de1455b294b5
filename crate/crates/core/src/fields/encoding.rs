use std::f64::consts::PI;

/// Width of the encoding of a `dim`-component input with `levels` frequencies.
pub fn encoded_dim(dim: usize, levels: usize) -> usize {
    dim * (1 + 2 * levels)
}

/// Frequency encoding. Each component `v` expands, in place, to
/// `v, sin(π v), cos(π v), sin(2π v), cos(2π v), …` up to `2^(levels-1) π`.
pub fn positional_encoding(value: &[f64], levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_dim(value.len(), levels));
    encode_into(value, levels, &mut out);
    out
}

pub(crate) fn encode_into(value: &[f64], levels: usize, out: &mut Vec<f64>) {
    for &v in value {
        out.push(v);
        let mut freq = PI;
        for _ in 0..levels {
            let (s, c) = (freq * v).sin_cos();
            out.push(s);
            out.push(c);
            freq *= 2.0;
        }
    }
}
