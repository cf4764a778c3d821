//! GRU and LSTM forward/backward over whole sequences.
//!
//! Hidden states are cached time-major as `[time + 1][batch][hidden]` (slot 0 is the
//! zero initial state). Input projections `X Wx + b` are computed for all steps in
//! one product; only the hidden-to-hidden products run per step.

use super::linalg::{gemm, gemm_strided};
use super::Tensor;

pub(crate) type Dims = (usize, usize, usize, usize);

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Default)]
pub(crate) struct GruCache {
    pub hs: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
}

#[derive(Debug, Default)]
pub(crate) struct LstmCache {
    pub hs: Vec<f64>,
    cs: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tc: Vec<f64>,
}

pub(crate) struct RecurrentGrads {
    pub dx: Option<Vec<f64>>,
    pub dwx: Vec<f64>,
    pub dwh: Vec<f64>,
    pub db: Vec<f64>,
}

fn active(lengths: Option<&[usize]>, b: usize, t: usize) -> bool {
    lengths.is_none_or(|l| t < l[b])
}

/// `X Wx + bias` as a `[batch * time, width]` matrix.
fn project_inputs((batch, time, inp, _): Dims, x: &[f64], wx: &[f64], bias: &[f64]) -> Vec<f64> {
    let width = bias.len();
    let mut xp = Vec::with_capacity(batch * time * width);
    for _ in 0..batch * time {
        xp.extend_from_slice(bias);
    }
    gemm(batch * time, inp, width, x, false, wx, false, 1.0, &mut xp);
    xp
}

pub(crate) fn gru_forward(
    dims: Dims,
    x: &[f64],
    wx: &[f64],
    wh: &[f64],
    bias: &[f64],
    lengths: Option<&[usize]>,
) -> GruCache {
    let (batch, time, _, h) = dims;
    let w3 = 3 * h;
    let xp = project_inputs(dims, x, wx, bias);
    let bh = batch * h;
    let mut cache = GruCache {
        hs: vec![0.0; (time + 1) * bh],
        z: vec![0.0; time * bh],
        r: vec![0.0; time * bh],
        n: vec![0.0; time * bh],
    };
    let mut hzr = vec![0.0; batch * 2 * h];
    let mut rh = vec![0.0; bh];
    let mut hn = vec![0.0; bh];
    for t in 0..time {
        let (done, rest) = cache.hs.split_at_mut((t + 1) * bh);
        let hprev = &done[t * bh..];
        let hnext = &mut rest[..bh];
        gemm_strided(batch, h, 2 * h, 1.0, hprev, (h, 1), wh, (w3, 1), 0.0, &mut hzr, (2 * h, 1));
        let zt = &mut cache.z[t * bh..(t + 1) * bh];
        let rt = &mut cache.r[t * bh..(t + 1) * bh];
        for b in 0..batch {
            let row = (b * time + t) * w3;
            for j in 0..h {
                let k = b * h + j;
                zt[k] = sigmoid(xp[row + j] + hzr[b * 2 * h + j]);
                rt[k] = sigmoid(xp[row + h + j] + hzr[b * 2 * h + h + j]);
                rh[k] = rt[k] * hprev[k];
            }
        }
        gemm_strided(batch, h, h, 1.0, &rh, (h, 1), &wh[2 * h..], (w3, 1), 0.0, &mut hn, (h, 1));
        let nt = &mut cache.n[t * bh..(t + 1) * bh];
        for b in 0..batch {
            let row = (b * time + t) * w3;
            let on = active(lengths, b, t);
            for j in 0..h {
                let k = b * h + j;
                nt[k] = (xp[row + 2 * h + j] + hn[k]).tanh();
                hnext[k] = if on {
                    (1.0 - zt[k]) * hprev[k] + zt[k] * nt[k]
                } else {
                    hprev[k]
                };
            }
        }
    }
    cache
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gru_backward(
    dims: Dims,
    cache: &GruCache,
    x: &[f64],
    wx: &[f64],
    wh: &[f64],
    lengths: Option<&[usize]>,
    dh_ext: &[f64],
    need_dx: bool,
) -> RecurrentGrads {
    let (batch, time, inp, h) = dims;
    let w3 = 3 * h;
    let bh = batch * h;
    let row_stride = time * w3;
    let mut dxp = vec![0.0; batch * time * w3];
    let mut dwh = vec![0.0; h * w3];
    let mut dh = vec![0.0; bh];
    let mut dh_prev = vec![0.0; bh];
    let mut d_rh = vec![0.0; bh];
    let mut rh = vec![0.0; bh];
    for t in (0..time).rev() {
        dh.iter_mut()
            .zip(&dh_ext[t * bh..(t + 1) * bh])
            .for_each(|(d, e)| *d += e);
        let hprev = &cache.hs[t * bh..(t + 1) * bh];
        let (zt, rt, nt) = (
            &cache.z[t * bh..(t + 1) * bh],
            &cache.r[t * bh..(t + 1) * bh],
            &cache.n[t * bh..(t + 1) * bh],
        );
        for b in 0..batch {
            let row = (b * time + t) * w3;
            let on = active(lengths, b, t);
            for j in 0..h {
                let k = b * h + j;
                rh[k] = rt[k] * hprev[k];
                if on {
                    let dn = dh[k] * zt[k];
                    let dz = dh[k] * (nt[k] - hprev[k]);
                    dxp[row + 2 * h + j] = dn * (1.0 - nt[k] * nt[k]);
                    dxp[row + j] = dz * zt[k] * (1.0 - zt[k]);
                    dh_prev[k] = dh[k] * (1.0 - zt[k]);
                } else {
                    dh_prev[k] = dh[k];
                }
            }
        }
        let off = t * w3;
        // Candidate path through r * h.
        gemm_strided(
            batch,
            h,
            h,
            1.0,
            &dxp[off + 2 * h..],
            (row_stride, 1),
            &wh[2 * h..],
            (1, w3),
            0.0,
            &mut d_rh,
            (h, 1),
        );
        gemm_strided(
            h,
            batch,
            h,
            1.0,
            &rh,
            (1, h),
            &dxp[off + 2 * h..],
            (row_stride, 1),
            1.0,
            &mut dwh[2 * h..],
            (w3, 1),
        );
        for b in 0..batch {
            let row = (b * time + t) * w3;
            if !active(lengths, b, t) {
                continue;
            }
            for j in 0..h {
                let k = b * h + j;
                let dr = d_rh[k] * hprev[k];
                dxp[row + h + j] = dr * rt[k] * (1.0 - rt[k]);
                dh_prev[k] += d_rh[k] * rt[k];
            }
        }
        // Update and reset gates.
        gemm_strided(
            batch,
            2 * h,
            h,
            1.0,
            &dxp[off..],
            (row_stride, 1),
            wh,
            (1, w3),
            1.0,
            &mut dh_prev,
            (h, 1),
        );
        gemm_strided(
            h,
            batch,
            2 * h,
            1.0,
            hprev,
            (1, h),
            &dxp[off..],
            (row_stride, 1),
            1.0,
            &mut dwh,
            (w3, 1),
        );
        std::mem::swap(&mut dh, &mut dh_prev);
    }
    finish_input_grads(dims, x, wx, dxp, dwh, inp, need_dx)
}

pub(crate) fn lstm_forward(
    dims: Dims,
    x: &[f64],
    wx: &[f64],
    wh: &[f64],
    bias: &[f64],
    lengths: Option<&[usize]>,
) -> LstmCache {
    let (batch, time, _, h) = dims;
    let w4 = 4 * h;
    let xp = project_inputs(dims, x, wx, bias);
    let bh = batch * h;
    let mut cache = LstmCache {
        hs: vec![0.0; (time + 1) * bh],
        cs: vec![0.0; (time + 1) * bh],
        i: vec![0.0; time * bh],
        f: vec![0.0; time * bh],
        g: vec![0.0; time * bh],
        o: vec![0.0; time * bh],
        tc: vec![0.0; time * bh],
    };
    let mut a = vec![0.0; batch * w4];
    for t in 0..time {
        let (hdone, hrest) = cache.hs.split_at_mut((t + 1) * bh);
        let (cdone, crest) = cache.cs.split_at_mut((t + 1) * bh);
        let (hprev, cprev) = (&hdone[t * bh..], &cdone[t * bh..]);
        let (hnext, cnext) = (&mut hrest[..bh], &mut crest[..bh]);
        gemm(batch, h, w4, hprev, false, wh, false, 0.0, &mut a);
        let s = t * bh;
        for b in 0..batch {
            let row = (b * time + t) * w4;
            let on = active(lengths, b, t);
            for j in 0..h {
                let k = b * h + j;
                let pre = |gate: usize| xp[row + gate * h + j] + a[b * w4 + gate * h + j];
                let (ig, fg, gg, og) = (sigmoid(pre(0)), sigmoid(pre(1)), pre(2).tanh(), sigmoid(pre(3)));
                cache.i[s + k] = ig;
                cache.f[s + k] = fg;
                cache.g[s + k] = gg;
                cache.o[s + k] = og;
                if on {
                    let c = fg * cprev[k] + ig * gg;
                    let tc = c.tanh();
                    cache.tc[s + k] = tc;
                    cnext[k] = c;
                    hnext[k] = og * tc;
                } else {
                    cnext[k] = cprev[k];
                    hnext[k] = hprev[k];
                }
            }
        }
    }
    cache
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward(
    dims: Dims,
    cache: &LstmCache,
    x: &[f64],
    wx: &[f64],
    wh: &[f64],
    lengths: Option<&[usize]>,
    dh_ext: &[f64],
    need_dx: bool,
) -> RecurrentGrads {
    let (batch, time, inp, h) = dims;
    let w4 = 4 * h;
    let bh = batch * h;
    let row_stride = time * w4;
    let mut dxp = vec![0.0; batch * time * w4];
    let mut dwh = vec![0.0; h * w4];
    let mut dh = vec![0.0; bh];
    let mut dc = vec![0.0; bh];
    let mut dh_prev = vec![0.0; bh];
    for t in (0..time).rev() {
        dh.iter_mut()
            .zip(&dh_ext[t * bh..(t + 1) * bh])
            .for_each(|(d, e)| *d += e);
        let hprev = &cache.hs[t * bh..(t + 1) * bh];
        let cprev = &cache.cs[t * bh..(t + 1) * bh];
        let s = t * bh;
        for b in 0..batch {
            let row = (b * time + t) * w4;
            let on = active(lengths, b, t);
            for j in 0..h {
                let k = b * h + j;
                if !on {
                    dh_prev[k] = dh[k];
                    continue;
                }
                let (ig, fg, gg, og, tc) = (
                    cache.i[s + k],
                    cache.f[s + k],
                    cache.g[s + k],
                    cache.o[s + k],
                    cache.tc[s + k],
                );
                let d_o = dh[k] * tc;
                let dct = dc[k] + dh[k] * og * (1.0 - tc * tc);
                dxp[row + j] = dct * gg * ig * (1.0 - ig);
                dxp[row + h + j] = dct * cprev[k] * fg * (1.0 - fg);
                dxp[row + 2 * h + j] = dct * ig * (1.0 - gg * gg);
                dxp[row + 3 * h + j] = d_o * og * (1.0 - og);
                dc[k] = dct * fg;
                dh_prev[k] = 0.0;
            }
        }
        let off = t * w4;
        gemm_strided(
            batch,
            w4,
            h,
            1.0,
            &dxp[off..],
            (row_stride, 1),
            wh,
            (1, w4),
            1.0,
            &mut dh_prev,
            (h, 1),
        );
        gemm_strided(
            h,
            batch,
            w4,
            1.0,
            hprev,
            (1, h),
            &dxp[off..],
            (row_stride, 1),
            1.0,
            &mut dwh,
            (w4, 1),
        );
        std::mem::swap(&mut dh, &mut dh_prev);
    }
    finish_input_grads(dims, x, wx, dxp, dwh, inp, need_dx)
}

fn finish_input_grads(
    (batch, time, _, _): Dims,
    x: &[f64],
    wx: &[f64],
    dxp: Vec<f64>,
    dwh: Vec<f64>,
    inp: usize,
    need_dx: bool,
) -> RecurrentGrads {
    let width = wx.len() / inp.max(1);
    let rows = batch * time;
    let mut dwx = vec![0.0; inp * width];
    gemm(inp, rows, width, x, true, &dxp, false, 0.0, &mut dwx);
    let mut db = vec![0.0; width];
    for row in dxp.chunks_exact(width) {
        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![0.0; rows * inp];
        gemm(rows, width, inp, &dxp, false, wx, true, 0.0, &mut dx);
        dx
    });
    RecurrentGrads { dx, dwx, dwh, db }
}

/// Output tensor from time-major hidden states: `[batch, time, hidden]` or the final `[batch, hidden]`.
pub(crate) fn collect_output(hs: &[f64], batch: usize, time: usize, h: usize, sequence: bool) -> Tensor {
    let bh = batch * h;
    if sequence {
        let mut out = vec![0.0; batch * time * h];
        for t in 0..time {
            for b in 0..batch {
                let src = &hs[(t + 1) * bh + b * h..(t + 1) * bh + (b + 1) * h];
                out[(b * time + t) * h..(b * time + t + 1) * h].copy_from_slice(src);
            }
        }
        Tensor::new(vec![batch, time, h], out).expect("consistent shape")
    } else {
        Tensor::new(vec![batch, h], hs[time * bh..(time + 1) * bh].to_vec()).expect("consistent shape")
    }
}

/// Output gradient rearranged time-major as `[time][batch][hidden]`.
pub(crate) fn spread_output_grad(g: &[f64], batch: usize, time: usize, h: usize, sequence: bool) -> Vec<f64> {
    let bh = batch * h;
    let mut out = vec![0.0; time * bh];
    if sequence {
        for t in 0..time {
            for b in 0..batch {
                out[t * bh + b * h..t * bh + (b + 1) * h].copy_from_slice(&g[(b * time + t) * h..(b * time + t + 1) * h]);
            }
        }
    } else if time > 0 {
        out[(time - 1) * bh..].copy_from_slice(g);
    }
    out
}
