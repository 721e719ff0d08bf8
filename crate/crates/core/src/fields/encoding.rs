use std::f64::consts::PI;

/// Sinusoidal encoding with `n_f` octaves starting at `2^k_f * pi`.
///
/// Output layout: for each frequency, for each input coordinate, the pair
/// `(sin, cos)`. Length is `2 * x.len() * n_f`.
pub fn positional_encoding(x: &[f64], n_f: usize, k_f: i32) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() * n_f);
    for j in 0..n_f {
        let freq = 2f64.powi(k_f + j as i32) * PI;
        for &xi in x {
            let (s, c) = (freq * xi).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
    out
}
