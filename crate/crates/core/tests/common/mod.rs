//! Test oracles shared by integration tests.

const SIGMA: f64 = 0.5;

/// Dense splat of an analytic flow from 4x4 sub-pixel sources per pixel,
/// each carrying the exact flow at its own position.
pub fn supersampled_oracle(w: usize, h: usize, flow: impl Fn(f64, f64) -> [f64; 2]) -> Vec<Option<[f64; 2]>> {
    let mut wsum = vec![0.0; w * h];
    let mut acc = vec![[0.0; 2]; w * h];
    for y in 0..h {
        for x in 0..w {
            for sy in 0..4 {
                for sx in 0..4 {
                    let px = x as f64 + (sx as f64 + 0.5) / 4.0 - 0.5;
                    let py = y as f64 + (sy as f64 + 0.5) / 4.0 - 0.5;
                    let [u, v] = flow(px, py);
                    let (tx, ty) = (px + u, py + v);
                    for ny in [ty.floor(), ty.floor() + 1.0] {
                        for nx in [tx.floor(), tx.floor() + 1.0] {
                            if nx < 0.0 || ny < 0.0 || nx >= w as f64 || ny >= h as f64 {
                                continue;
                            }
                            let d2 = (tx - nx).powi(2) + (ty - ny).powi(2);
                            let wt = (-d2 / (SIGMA * SIGMA)).exp() / 16.0;
                            let i = ny as usize * w + nx as usize;
                            wsum[i] += wt;
                            acc[i][0] -= wt * u;
                            acc[i][1] -= wt * v;
                        }
                    }
                }
            }
        }
    }
    (0..w * h)
        .map(|i| (wsum[i] >= 1e-4).then(|| [acc[i][0] / wsum[i], acc[i][1] / wsum[i]]))
        .collect()
}
