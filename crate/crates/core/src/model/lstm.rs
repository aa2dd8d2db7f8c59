//! A single LSTM cell step and its backward pass.

use super::math::{matvec_add, matvec_t_add, outer_add, sigmoid};

/// Activations saved by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct CellCache {
    /// `[x; h_prev]`
    pub xh: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One step. `w` is 4H x (in + H), `b` is 4H. Returns (h, c, cache).
pub(crate) fn forward(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, CellCache) {
    let hidden = h_prev.len();
    let mut xh = Vec::with_capacity(x.len() + hidden);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let mut z = b.to_vec();
    matvec_add(w, xh.len(), &xh, &mut z);

    let (zi, rest) = z.split_at(hidden);
    let (zf, rest) = rest.split_at(hidden);
    let (zg, zo) = rest.split_at(hidden);
    let i: Vec<f64> = zi.iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = zf.iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = zg.iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = zo.iter().map(|&v| sigmoid(v)).collect();

    let c: Vec<f64> = (0..hidden)
        .map(|k| f[k] * c_prev[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hidden).map(|k| o[k] * tanh_c[k]).collect();
    let cache = CellCache {
        xh,
        i,
        f,
        g,
        o,
        c_prev: c_prev.to_vec(),
        tanh_c,
    };
    (h, c, cache)
}

/// Backward through one step.
///
/// `dh` and `dc` are the total gradients reaching this step's outputs.
/// Accumulates into `dw`/`db` and returns (dx, dh_prev, dc_prev).
pub(crate) fn backward(
    cache: &CellCache,
    w: &[f64],
    dh: &[f64],
    dc: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = dh.len();
    let mut dz = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, g, o, tc) = (
            cache.i[k],
            cache.f[k],
            cache.g[k],
            cache.o[k],
            cache.tanh_c[k],
        );
        let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dct * g * i * (1.0 - i);
        dz[hidden + k] = dct * cache.c_prev[k] * f * (1.0 - f);
        dz[2 * hidden + k] = dct * i * (1.0 - g * g);
        dz[3 * hidden + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dct * f;
    }
    outer_add(dw, &dz, &cache.xh);
    for (d, z) in db.iter_mut().zip(&dz) {
        *d += z;
    }
    let mut dxh = vec![0.0; cache.xh.len()];
    matvec_t_add(w, cache.xh.len(), &dz, &mut dxh);
    let dh_prev = dxh.split_off(cache.xh.len() - hidden);
    (dxh, dh_prev, dc_prev)
}
