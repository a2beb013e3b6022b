//! Plain-vector reference implementations used as independent oracles.

use crate::fusion::TrmParams;
use crate::numerics::{LayerNorm, Linear, Mlp, ParamStore, LN_EPS};

pub type Rows = Vec<Vec<f64>>;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (0.797_884_560_802_865_4 * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn linear(store: &ParamStore, l: &Linear, x: &Rows) -> Rows {
    let w = store.get(l.weight);
    let (i, o) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|r| {
            (0..o)
                .map(|c| (0..i).map(|k| r[k] * w.at(k, c)).sum::<f64>() + l.bias.map_or(0.0, |b| store.get(b).data()[c]))
                .collect()
        })
        .collect()
}

pub fn mlp(store: &ParamStore, m: &Mlp, x: &Rows) -> Rows {
    let h = linear(store, &m.first, x);
    let h: Rows = h.into_iter().map(|r| r.into_iter().map(gelu).collect()).collect();
    linear(store, &m.second, &h)
}

pub fn layer_norm(store: &ParamStore, ln: &LayerNorm, x: &Rows) -> Rows {
    let g = store.get(ln.gain).data();
    let b = store.get(ln.bias).data();
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + LN_EPS).sqrt() * g[j] + b[j])
                .collect()
        })
        .collect()
}

pub fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

/// Pre-norm TRM evaluated with explicit loops.
pub fn trm(store: &ParamStore, p: &TrmParams, q: &Rows, kv: &Rows, same_set: bool) -> Rows {
    let qn = layer_norm(store, &p.norm_query, q);
    let kvn = match (&p.norm_kv, same_set) {
        (Some(n), _) => layer_norm(store, n, kv),
        (None, true) => qn.clone(),
        (None, false) => layer_norm(store, &p.norm_query, kv),
    };
    let (qq, kk, vv) = (linear(store, &p.query, &qn), linear(store, &p.key, &kvn), linear(store, &p.value, &kvn));
    let d = qq[0].len();
    let hd = d / p.heads;
    let mut merged = vec![vec![0.0; d]; q.len()];
    for h in 0..p.heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..q.len() {
            let s: Vec<f64> = kk
                .iter()
                .map(|k| cols.clone().map(|c| qq[i][c] * k[c]).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in cols.clone() {
                merged[i][c] = (0..kk.len()).map(|j| e[j] / z * vv[j][c]).sum();
            }
        }
    }
    let att = linear(store, &p.output, &merged);
    let h = add(q, &att);
    let f = layer_norm(store, &p.norm_ffn, &h);
    add(&h, &mlp(store, &p.ffn, &f))
}
