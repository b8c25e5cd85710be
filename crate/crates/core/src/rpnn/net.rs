//! Flat-parameter network: dense tanh encoder, GRU cell, residual tanh
//! decoder, mean and clamped log-variance heads. Forward and exact backward
//! through time.

use serde::{Deserialize, Serialize};

use super::config::RpnnConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Gru {
    /// Input weights for reset, update and candidate, `hidden x input` each.
    pub wi: [usize; 3],
    pub wh: [usize; 3],
    pub bi: [usize; 3],
    pub bh: [usize; 3],
    pub inp: usize,
    pub hid: usize,
}

/// Offsets of every weight and bias inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub(crate) enc: Vec<Dense>,
    pub(crate) gru: Gru,
    pub(crate) dec: Vec<Dense>,
    pub(crate) mean: Dense,
    pub(crate) logvar: Dense,
    pub groups: Vec<ParamGroup>,
    pub n_params: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub logvar_min: f64,
    pub logvar_max: f64,
}

impl Architecture {
    pub fn new(cfg: &RpnnConfig) -> Self {
        let mut groups = Vec::new();
        let mut offset = 0;
        let mut alloc = |name: String, rows: usize, cols: usize| {
            let g = ParamGroup { name, offset, rows, cols };
            offset += rows * cols;
            let o = g.offset;
            groups.push(g);
            o
        };
        let dense = |prefix: String, inp: usize, out: usize, alloc: &mut dyn FnMut(String, usize, usize) -> usize| {
            let w = alloc(format!("{prefix}.weight"), out, inp);
            let b = alloc(format!("{prefix}.bias"), out, 1);
            Dense { w, b, inp, out }
        };

        let input_dim = cfg.state_dim + cfg.action_dim;
        let mut enc = Vec::new();
        let mut width = input_dim;
        for (i, &w) in cfg.encoder_widths.iter().enumerate() {
            enc.push(dense(format!("encoder.{i}"), width, w, &mut alloc));
            width = w;
        }
        let h = cfg.hidden;
        let gates = ["r", "z", "n"];
        let wi = gates.map(|g| alloc(format!("gru.weight_i{g}"), h, width));
        let wh = gates.map(|g| alloc(format!("gru.weight_h{g}"), h, h));
        let bi = gates.map(|g| alloc(format!("gru.bias_i{g}"), h, 1));
        let bh = gates.map(|g| alloc(format!("gru.bias_h{g}"), h, 1));
        let gru = Gru { wi, wh, bi, bh, inp: width, hid: h };
        let mut dec = Vec::new();
        let mut width = h;
        for (i, &w) in cfg.decoder_widths.iter().enumerate() {
            dec.push(dense(format!("decoder.{i}"), width, w, &mut alloc));
            width = w;
        }
        let mean = dense("head_mean".into(), width, cfg.state_dim, &mut alloc);
        let logvar = dense("head_logvar".into(), width, cfg.state_dim, &mut alloc);
        drop(alloc);
        Architecture {
            enc,
            gru,
            dec,
            mean,
            logvar,
            groups,
            n_params: offset,
            input_dim,
            hidden: h,
            output_dim: cfg.state_dim,
            logvar_min: cfg.logvar_min,
            logvar_max: cfg.logvar_max,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    crate::plant::dynamics::logistic(x)
}

fn affine(p: &[f64], w: usize, b: usize, inp: usize, out: usize, x: &[f64], y: &mut Vec<f64>) {
    y.clear();
    for o in 0..out {
        let row = &p[w + o * inp..w + (o + 1) * inp];
        y.push(p[b + o] + dot(row, x));
    }
}

/// `y = W x` without bias, accumulated into `y`.
fn matvec_add(p: &[f64], w: usize, inp: usize, x: &[f64], y: &mut [f64]) {
    for (o, yo) in y.iter_mut().enumerate() {
        *yo += dot(&p[w + o * inp..w + (o + 1) * inp], x);
    }
}

/// Accumulate `dW += dy x^T`, `db += dy` (if `b` given) and `dx += W^T dy`.
fn affine_back(
    p: &[f64],
    g: &mut [f64],
    w: usize,
    b: Option<usize>,
    inp: usize,
    x: &[f64],
    dy: &[f64],
    mut dx: Option<&mut [f64]>,
) {
    for (o, &go) in dy.iter().enumerate() {
        if go == 0.0 {
            continue;
        }
        if let Some(b) = b {
            g[b + o] += go;
        }
        let gw = &mut g[w + o * inp..w + (o + 1) * inp];
        for (gi, xi) in gw.iter_mut().zip(x) {
            *gi += go * xi;
        }
        if let Some(dx) = dx.as_deref_mut() {
            let row = &p[w + o * inp..w + (o + 1) * inp];
            for (d, wi) in dx.iter_mut().zip(row) {
                *d += go * wi;
            }
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone, Default)]
pub(crate) struct StepTrace {
    pub x: Vec<f64>,
    /// Encoder activations, one per layer.
    pub enc: Vec<Vec<f64>>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `W_hn h_prev + b_hn`.
    pub hn: Vec<f64>,
    pub h: Vec<f64>,
    /// Decoder tanh outputs and layer outputs (after the residual add).
    pub dec_t: Vec<Vec<f64>>,
    pub dec_out: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub raw_logvar: Vec<f64>,
}

impl StepTrace {
    pub fn logvar(&self, arch: &Architecture, i: usize) -> f64 {
        self.raw_logvar[i].clamp(arch.logvar_min, arch.logvar_max)
    }

    pub fn decoder_output(&self) -> &[f64] {
        self.dec_out.last().map_or(&self.h, Vec::as_slice)
    }
}

/// One recurrent step in network units; fills `tr` (reusing its buffers).
pub(crate) fn forward_step(arch: &Architecture, p: &[f64], x: &[f64], h_prev: &[f64], tr: &mut StepTrace) {
    tr.x.clear();
    tr.x.extend_from_slice(x);
    tr.enc.resize_with(arch.enc.len(), Vec::new);
    for (i, d) in arch.enc.iter().enumerate() {
        let (before, rest) = tr.enc.split_at_mut(i);
        let input = if i == 0 { &tr.x } else { &before[i - 1] };
        affine(p, d.w, d.b, d.inp, d.out, input, &mut rest[0]);
        rest[0].iter_mut().for_each(|v| *v = v.tanh());
    }
    let e: &[f64] = tr.enc.last().map_or(&tr.x, Vec::as_slice);
    let g = &arch.gru;
    tr.h_prev.clear();
    tr.h_prev.extend_from_slice(h_prev);

    let gate = |k: usize, out: &mut Vec<f64>| {
        affine(p, g.wi[k], g.bi[k], g.inp, g.hid, e, out);
        for (o, v) in out.iter_mut().enumerate() {
            *v += p[g.bh[k] + o];
        }
        matvec_add(p, g.wh[k], g.hid, h_prev, out);
    };
    gate(0, &mut tr.r);
    tr.r.iter_mut().for_each(|v| *v = sigmoid(*v));
    gate(1, &mut tr.z);
    tr.z.iter_mut().for_each(|v| *v = sigmoid(*v));

    affine(p, g.wh[2], g.bh[2], g.hid, g.hid, h_prev, &mut tr.hn);
    affine(p, g.wi[2], g.bi[2], g.inp, g.hid, e, &mut tr.n);
    for o in 0..g.hid {
        tr.n[o] = (tr.n[o] + tr.r[o] * tr.hn[o]).tanh();
    }
    tr.h.clear();
    tr.h.extend((0..g.hid).map(|o| (1.0 - tr.z[o]) * tr.n[o] + tr.z[o] * h_prev[o]));

    tr.dec_t.resize_with(arch.dec.len(), Vec::new);
    tr.dec_out.resize_with(arch.dec.len(), Vec::new);
    for (i, d) in arch.dec.iter().enumerate() {
        let mut t = std::mem::take(&mut tr.dec_t[i]);
        let mut out = std::mem::take(&mut tr.dec_out[i]);
        let input: &[f64] = if i == 0 { &tr.h } else { &tr.dec_out[i - 1] };
        affine(p, d.w, d.b, d.inp, d.out, input, &mut t);
        t.iter_mut().for_each(|v| *v = v.tanh());
        out.clear();
        if d.inp == d.out {
            out.extend(t.iter().zip(input).map(|(a, b)| a + b));
        } else {
            out.extend_from_slice(&t);
        }
        tr.dec_t[i] = t;
        tr.dec_out[i] = out;
    }
    let u: &[f64] = tr.dec_out.last().map_or(&tr.h, Vec::as_slice);
    affine(p, arch.mean.w, arch.mean.b, arch.mean.inp, arch.mean.out, u, &mut tr.mean);
    affine(p, arch.logvar.w, arch.logvar.b, arch.logvar.inp, arch.logvar.out, u, &mut tr.raw_logvar);
}

/// Gradient of the summed step losses w.r.t. the step outputs, given by the
/// caller per step as `(d_mean, d_logvar)` after clamping.
///
/// Runs backward through a whole sequence of traces and accumulates into `g`.
pub(crate) fn backward_sequence(
    arch: &Architecture,
    p: &[f64],
    traces: &[StepTrace],
    d_out: &[(Vec<f64>, Vec<f64>)],
    g: &mut [f64],
) {
    let gr = &arch.gru;
    let mut dh_next = vec![0.0; gr.hid];
    let mut du = Vec::new();
    let mut din = Vec::new();
    let mut dpre = Vec::new();
    let e_dim = gr.inp;
    let mut de = vec![0.0; e_dim];
    let mut da = [vec![0.0; gr.hid], vec![0.0; gr.hid], vec![0.0; gr.hid]];
    let mut dhn = vec![0.0; gr.hid];

    for (tr, (dm, dlv)) in traces.iter().zip(d_out).rev() {
        let u = tr.decoder_output();
        du.clear();
        du.resize(u.len(), 0.0);
        affine_back(p, g, arch.mean.w, Some(arch.mean.b), arch.mean.inp, u, dm, Some(&mut du));
        affine_back(p, g, arch.logvar.w, Some(arch.logvar.b), arch.logvar.inp, u, dlv, Some(&mut du));

        for (i, d) in arch.dec.iter().enumerate().rev() {
            let input: &[f64] = if i == 0 { &tr.h } else { &tr.dec_out[i - 1] };
            dpre.clear();
            dpre.extend(du.iter().zip(&tr.dec_t[i]).map(|(g, t)| g * (1.0 - t * t)));
            din.clear();
            if d.inp == d.out {
                din.extend_from_slice(&du);
            } else {
                din.resize(d.inp, 0.0);
            }
            affine_back(p, g, d.w, Some(d.b), d.inp, input, &dpre, Some(&mut din));
            std::mem::swap(&mut du, &mut din);
        }

        // du is now dL/dh from this step's output; add the recurrent path.
        let dh: Vec<f64> = du.iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let e: &[f64] = tr.enc.last().map_or(&tr.x, Vec::as_slice);
        let mut dh_prev: Vec<f64> = dh.iter().zip(&tr.z).map(|(d, z)| d * z).collect();
        for o in 0..gr.hid {
            let dn = dh[o] * (1.0 - tr.z[o]);
            let dz = dh[o] * (tr.h_prev[o] - tr.n[o]);
            let dan = dn * (1.0 - tr.n[o] * tr.n[o]);
            da[2][o] = dan;
            dhn[o] = dan * tr.r[o];
            let dr = dan * tr.hn[o];
            da[0][o] = dr * tr.r[o] * (1.0 - tr.r[o]);
            da[1][o] = dz * tr.z[o] * (1.0 - tr.z[o]);
        }
        de.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..3 {
            affine_back(p, g, gr.wi[k], Some(gr.bi[k]), gr.inp, e, &da[k], Some(&mut de));
        }
        affine_back(p, g, gr.wh[0], Some(gr.bh[0]), gr.hid, &tr.h_prev, &da[0], Some(&mut dh_prev));
        affine_back(p, g, gr.wh[1], Some(gr.bh[1]), gr.hid, &tr.h_prev, &da[1], Some(&mut dh_prev));
        affine_back(p, g, gr.wh[2], Some(gr.bh[2]), gr.hid, &tr.h_prev, &dhn, Some(&mut dh_prev));
        dh_next = dh_prev;

        let mut dact = de.clone();
        for (i, d) in arch.enc.iter().enumerate().rev() {
            let input: &[f64] = if i == 0 { &tr.x } else { &tr.enc[i - 1] };
            dpre.clear();
            dpre.extend(dact.iter().zip(&tr.enc[i]).map(|(g, a)| g * (1.0 - a * a)));
            let mut dprev = vec![0.0; d.inp];
            let want_dx = i > 0;
            affine_back(p, g, d.w, Some(d.b), d.inp, input, &dpre, want_dx.then_some(&mut dprev[..]));
            dact = dprev;
        }
    }
}
