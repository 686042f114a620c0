use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layout::{LayerOffsets, ParamKind, ParamLayout};
use super::{ModelConfig, ModelError};
use crate::vocab::{TokenId, PAD_ID};

const LN_EPS: f64 = 1e-5;
pub(crate) const INIT_STD: f64 = 0.02;

/// Pre-norm decoder-only transformer: learned token and position
/// embeddings, causal multi-head attention, GELU MLP of width `4 * dim`,
/// final layer norm and an untied output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
}

struct LayerCache {
    ln1_xhat: Array2<f64>,
    ln1_rstd: Vec<f64>,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<Array2<f64>>,
    att: Array2<f64>,
    ln2_xhat: Array2<f64>,
    ln2_rstd: Vec<f64>,
    h2: Array2<f64>,
    fc: Array2<f64>,
    act: Array2<f64>,
}

struct SeqCache {
    layers: Vec<LayerCache>,
    lnf_xhat: Array2<f64>,
    lnf_rstd: Vec<f64>,
    hf: Array2<f64>,
}

fn view(p: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout matches buffer")
}

fn view_mut(p: &mut [f64], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[off..off + rows * cols]).expect("layout matches buffer")
}

fn layer_norm(x: &Array2<f64>, g: &[f64], b: &[f64]) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let (n, d) = x.dim();
    let mut xhat = Array2::zeros((n, d));
    let mut out = Array2::zeros((n, d));
    let mut rstds = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        rstds.push(rstd);
        for j in 0..d {
            let h = (row[j] - mean) * rstd;
            xhat[[i, j]] = h;
            out[[i, j]] = h * g[j] + b[j];
        }
    }
    (out, xhat, rstds)
}

/// Returns d(input); accumulates gain and bias gradients.
fn layer_norm_backward(dout: &Array2<f64>, xhat: &Array2<f64>, rstd: &[f64], g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Array2<f64> {
    let (n, d) = dout.dim();
    let mut dx = Array2::zeros((n, d));
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            let go = dout[[i, j]];
            dg[j] += go * xhat[[i, j]];
            db[j] += go;
            dxhat[j] = go * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[[i, j]];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            dx[[i, j]] = rstd[i] * (dxhat[j] - mean_dxhat - xhat[[i, j]] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn add_row(x: &mut Array2<f64>, b: &[f64]) {
    for mut row in x.rows_mut() {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn sum_rows_into(x: &Array2<f64>, out: &mut [f64]) {
    for row in x.rows() {
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += v;
        }
    }
}

/// In-place causal softmax over each row of a square score matrix.
fn causal_softmax(scores: &mut Array2<f64>) {
    let n = scores.nrows();
    for i in 0..n {
        let mut row = scores.row_mut(i);
        let max = row.slice(s![..=i]).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for j in 0..=i {
            let e = (row[j] - max).exp();
            row[j] = e;
            sum += e;
        }
        for j in 0..=i {
            row[j] /= sum;
        }
        for j in i + 1..n {
            row[j] = 0.0;
        }
    }
}

/// Per-layer keys and values of everything consumed so far, for
/// token-by-token generation.
#[derive(Debug, Clone)]
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Model {
    /// Normal(0, 0.02) weights and embeddings, zero biases, unit norm gains.
    pub fn init(config: ModelConfig) -> Result<Model, ModelError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for spec in &layout.specs {
            let dst = &mut params[spec.range()];
            match spec.kind {
                ParamKind::Embedding | ParamKind::Weight => dst.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
                ParamKind::NormGain => dst.fill(1.0),
                ParamKind::Bias | ParamKind::NormBias => {}
            }
        }
        Ok(Model { config, layout, params })
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    fn p(&self, off: usize, n: usize) -> &[f64] {
        &self.params[off..off + n]
    }

    fn check(&self, ids: &[TokenId]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::TooShort { need: 1, len: 0 });
        }
        if ids.len() > self.config.max_len {
            return Err(ModelError::TooLong { len: ids.len(), max_len: self.config.max_len });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange { id, vocab_size: self.config.vocab_size });
        }
        Ok(())
    }

    fn linear(&self, x: &Array2<f64>, w: usize, b: usize, out_dim: usize) -> Array2<f64> {
        let mut y = x.dot(&view(&self.params, w, x.ncols(), out_dim));
        add_row(&mut y, self.p(b, out_dim));
        y
    }

    fn forward_seq(&self, ids: &[TokenId], keep: bool) -> (Array2<f64>, Option<SeqCache>) {
        let cfg = &self.config;
        let (d, hd, n) = (cfg.dim, cfg.head_dim(), ids.len());
        let scale = 1.0 / (hd as f64).sqrt();
        let lay = &self.layout;

        let mut x = Array2::zeros((n, d));
        for (t, &id) in ids.iter().enumerate() {
            let tok = self.p(lay.tok_emb + id as usize * d, d);
            let pos = self.p(lay.pos_emb + t * d, d);
            for j in 0..d {
                x[[t, j]] = tok[j] + pos[j];
            }
        }

        let mut caches = Vec::new();
        for lo in &lay.layers {
            let (h1, ln1_xhat, ln1_rstd) = layer_norm(&x, self.p(lo.ln1_g, d), self.p(lo.ln1_b, d));
            let qkv = self.linear(&h1, lo.w_qkv, lo.b_qkv, 3 * d);
            let mut att = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let q = qkv.slice(s![.., h * hd..(h + 1) * hd]);
                let k = qkv.slice(s![.., d + h * hd..d + (h + 1) * hd]);
                let v = qkv.slice(s![.., 2 * d + h * hd..2 * d + (h + 1) * hd]);
                let mut p = q.dot(&k.t());
                p *= scale;
                causal_softmax(&mut p);
                att.slice_mut(s![.., h * hd..(h + 1) * hd]).assign(&p.dot(&v));
                if keep {
                    probs.push(p);
                }
            }
            let proj = self.linear(&att, lo.w_proj, lo.b_proj, d);
            x += &proj;

            let (h2, ln2_xhat, ln2_rstd) = layer_norm(&x, self.p(lo.ln2_g, d), self.p(lo.ln2_b, d));
            let fc = self.linear(&h2, lo.w_fc, lo.b_fc, 4 * d);
            let act = fc.mapv(gelu);
            let out = self.linear(&act, lo.w_fc2, lo.b_fc2, d);
            x += &out;

            if keep {
                caches.push(LayerCache { ln1_xhat, ln1_rstd, h1, qkv, probs, att, ln2_xhat, ln2_rstd, h2, fc, act });
            }
        }

        let (hf, lnf_xhat, lnf_rstd) = layer_norm(&x, self.p(lay.lnf_g, d), self.p(lay.lnf_b, d));
        let logits = hf.dot(&view(&self.params, lay.w_out, d, cfg.vocab_size));
        let cache = keep.then_some(SeqCache { layers: caches, lnf_xhat, lnf_rstd, hf });
        (logits, cache)
    }

    /// Logits for every position of every sequence (`B x [L x V]`).
    /// Position `t` depends only on tokens `0..=t`.
    pub fn forward(&self, batch: &[&[TokenId]]) -> Result<Vec<Array2<f64>>, ModelError> {
        batch
            .iter()
            .map(|ids| {
                self.check(ids)?;
                Ok(self.forward_seq(ids, false).0)
            })
            .collect()
    }

    fn split_targets<'a>(&self, batch: &[&'a [TokenId]]) -> Result<(Vec<(&'a [TokenId], &'a [TokenId])>, usize), ModelError> {
        let mut pairs = Vec::with_capacity(batch.len());
        let mut count = 0;
        for ids in batch {
            if ids.len() < 2 {
                return Err(ModelError::TooShort { need: 2, len: ids.len() });
            }
            self.check(&ids[..ids.len() - 1])?;
            self.check(&ids[1..])?;
            count += ids[1..].iter().filter(|&&t| t != PAD_ID).count();
            pairs.push((&ids[..ids.len() - 1], &ids[1..]));
        }
        if count == 0 {
            return Err(ModelError::AllPadTargets);
        }
        Ok((pairs, count))
    }

    /// Mean next-token cross-entropy over non-pad targets.
    pub fn loss(&self, batch: &[&[TokenId]]) -> Result<f64, ModelError> {
        let (pairs, count) = self.split_targets(batch)?;
        let mut total = 0.0;
        for (input, target) in pairs {
            let (logits, _) = self.forward_seq(input, false);
            for (t, &y) in target.iter().enumerate() {
                if y != PAD_ID {
                    let row = logits.row(t);
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    total += lse - row[y as usize];
                }
            }
        }
        Ok(total / count as f64)
    }

    /// Loss as in [`Model::loss`] and its gradient for every parameter,
    /// in the flat layout.
    pub fn loss_and_grads(&self, batch: &[&[TokenId]]) -> Result<(f64, Vec<f64>), ModelError> {
        let (pairs, count) = self.split_targets(batch)?;
        let mut grads = vec![0.0; self.layout.total];
        let mut total = 0.0;
        let inv = 1.0 / count as f64;
        for (input, target) in pairs {
            let (logits, cache) = self.forward_seq(input, true);
            let mut dlogits = Array2::zeros(logits.dim());
            for (t, &y) in target.iter().enumerate() {
                if y == PAD_ID {
                    continue;
                }
                let row = logits.row(t);
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                total += max + sum.ln() - row[y as usize];
                let mut drow = dlogits.row_mut(t);
                for (dv, v) in drow.iter_mut().zip(row.iter()) {
                    *dv = (v - max).exp() / sum * inv;
                }
                drow[y as usize] -= inv;
            }
            self.backward_seq(input, &dlogits, &cache.expect("cache kept"), &mut grads);
        }
        Ok((total * inv, grads))
    }

    fn backward_seq(&self, ids: &[TokenId], dlogits: &Array2<f64>, cache: &SeqCache, grads: &mut [f64]) {
        let cfg = &self.config;
        let (d, hd, v) = (cfg.dim, cfg.head_dim(), cfg.vocab_size);
        let scale = 1.0 / (hd as f64).sqrt();
        let lay = &self.layout;

        general_mat_mul(1.0, &cache.hf.t(), dlogits, 1.0, &mut view_mut(grads, lay.w_out, d, v));
        let dhf = dlogits.dot(&view(&self.params, lay.w_out, d, v).t());
        let mut dx = {
            let (dg, db) = grads[lay.lnf_g..lay.lnf_b + d].split_at_mut(d);
            layer_norm_backward(&dhf, &cache.lnf_xhat, &cache.lnf_rstd, self.p(lay.lnf_g, d), dg, db)
        };

        for (lo, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            let lo: &LayerOffsets = lo;
            // mlp
            general_mat_mul(1.0, &lc.act.t(), &dx, 1.0, &mut view_mut(grads, lo.w_fc2, 4 * d, d));
            sum_rows_into(&dx, &mut grads[lo.b_fc2..lo.b_fc2 + d]);
            let mut dfc = dx.dot(&view(&self.params, lo.w_fc2, 4 * d, d).t());
            dfc.zip_mut_with(&lc.fc, |g, &x| *g *= gelu_grad(x));
            general_mat_mul(1.0, &lc.h2.t(), &dfc, 1.0, &mut view_mut(grads, lo.w_fc, d, 4 * d));
            sum_rows_into(&dfc, &mut grads[lo.b_fc..lo.b_fc + 4 * d]);
            let dh2 = dfc.dot(&view(&self.params, lo.w_fc, d, 4 * d).t());
            {
                let (dg, db) = grads[lo.ln2_g..lo.ln2_b + d].split_at_mut(d);
                dx += &layer_norm_backward(&dh2, &lc.ln2_xhat, &lc.ln2_rstd, self.p(lo.ln2_g, d), dg, db);
            }

            // attention
            general_mat_mul(1.0, &lc.att.t(), &dx, 1.0, &mut view_mut(grads, lo.w_proj, d, d));
            sum_rows_into(&dx, &mut grads[lo.b_proj..lo.b_proj + d]);
            let datt = dx.dot(&view(&self.params, lo.w_proj, d, d).t());
            let mut dqkv = Array2::zeros(lc.qkv.dim());
            for h in 0..cfg.heads {
                let (qs, ks, vs) = (h * hd, d + h * hd, 2 * d + h * hd);
                let q = lc.qkv.slice(s![.., qs..qs + hd]);
                let k = lc.qkv.slice(s![.., ks..ks + hd]);
                let vv = lc.qkv.slice(s![.., vs..vs + hd]);
                let p = &lc.probs[h];
                let dout = datt.slice(s![.., qs..qs + hd]);
                let mut dp = dout.dot(&vv.t());
                dqkv.slice_mut(s![.., vs..vs + hd]).assign(&p.t().dot(&dout));
                // softmax backward, then the score scale
                for (mut drow, prow) in dp.rows_mut().into_iter().zip(p.rows()) {
                    let dot: f64 = drow.iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
                    for (g, &pv) in drow.iter_mut().zip(prow.iter()) {
                        *g = pv * (*g - dot) * scale;
                    }
                }
                dqkv.slice_mut(s![.., qs..qs + hd]).assign(&dp.dot(&k));
                dqkv.slice_mut(s![.., ks..ks + hd]).assign(&dp.t().dot(&q));
            }
            general_mat_mul(1.0, &lc.h1.t(), &dqkv, 1.0, &mut view_mut(grads, lo.w_qkv, d, 3 * d));
            sum_rows_into(&dqkv, &mut grads[lo.b_qkv..lo.b_qkv + 3 * d]);
            let dh1 = dqkv.dot(&view(&self.params, lo.w_qkv, d, 3 * d).t());
            {
                let (dg, db) = grads[lo.ln1_g..lo.ln1_b + d].split_at_mut(d);
                dx += &layer_norm_backward(&dh1, &lc.ln1_xhat, &lc.ln1_rstd, self.p(lo.ln1_g, d), dg, db);
            }
        }

        for (t, &id) in ids.iter().enumerate() {
            let row = dx.row(t);
            let tok = lay.tok_emb + id as usize * d;
            let pos = lay.pos_emb + t * d;
            for j in 0..d {
                grads[tok + j] += row[j];
                grads[pos + j] += row[j];
            }
        }
    }

    pub fn new_cache(&self) -> KvCache {
        let n = self.config.layers;
        KvCache { keys: vec![Vec::new(); n], values: vec![Vec::new(); n], len: 0 }
    }

    /// Consumes one token and returns the logits for the next one,
    /// reusing the keys and values already in `cache`.
    pub fn step(&self, cache: &mut KvCache, token: TokenId) -> Result<Vec<f64>, ModelError> {
        let cfg = &self.config;
        let (d, hd) = (cfg.dim, cfg.head_dim());
        if cache.len >= cfg.max_len {
            return Err(ModelError::TooLong { len: cache.len + 1, max_len: cfg.max_len });
        }
        if token as usize >= cfg.vocab_size {
            return Err(ModelError::TokenOutOfRange { id: token, vocab_size: cfg.vocab_size });
        }
        let lay = &self.layout;
        let t = cache.len;
        let scale = 1.0 / (hd as f64).sqrt();

        let mut x = Array2::zeros((1, d));
        let tok = self.p(lay.tok_emb + token as usize * d, d);
        let pos = self.p(lay.pos_emb + t * d, d);
        for j in 0..d {
            x[[0, j]] = tok[j] + pos[j];
        }

        for (l, lo) in lay.layers.iter().enumerate() {
            let (h1, _, _) = layer_norm(&x, self.p(lo.ln1_g, d), self.p(lo.ln1_b, d));
            let qkv = self.linear(&h1, lo.w_qkv, lo.b_qkv, 3 * d);
            let qkv = qkv.row(0);
            cache.keys[l].extend(qkv.slice(s![d..2 * d]).iter());
            cache.values[l].extend(qkv.slice(s![2 * d..]).iter());
            let (keys, values) = (&cache.keys[l], &cache.values[l]);

            let mut att = Array2::zeros((1, d));
            let mut scores = vec![0.0; t + 1];
            for h in 0..cfg.heads {
                let q = qkv.slice(s![h * hd..(h + 1) * hd]);
                for (s_, sc) in scores.iter_mut().enumerate() {
                    let k = &keys[s_ * d + h * hd..s_ * d + (h + 1) * hd];
                    *sc = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                let max = scores.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let mut sum = 0.0;
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    sum += *sc;
                }
                for (s_, &w) in scores.iter().enumerate() {
                    let v = &values[s_ * d + h * hd..s_ * d + (h + 1) * hd];
                    for j in 0..hd {
                        att[[0, h * hd + j]] += w / sum * v[j];
                    }
                }
            }
            x += &self.linear(&att, lo.w_proj, lo.b_proj, d);
            let (h2, _, _) = layer_norm(&x, self.p(lo.ln2_g, d), self.p(lo.ln2_b, d));
            let act = self.linear(&h2, lo.w_fc, lo.b_fc, 4 * d).mapv(gelu);
            x += &self.linear(&act, lo.w_fc2, lo.b_fc2, d);
        }
        cache.len += 1;
        let (hf, _, _) = layer_norm(&x, self.p(lay.lnf_g, d), self.p(lay.lnf_b, d));
        let logits = hf.dot(&view(&self.params, lay.w_out, d, cfg.vocab_size));
        Ok(logits.index_axis(Axis(0), 0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(vocab: usize, seed: u64) -> Model {
        Model::init(ModelConfig { vocab_size: vocab, dim: 8, heads: 2, layers: 1, max_len: 16, seed }).unwrap()
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(tiny(20, 3), tiny(20, 3));
        assert_ne!(tiny(20, 3).params, tiny(20, 4).params);
        let m = tiny(20, 3);
        let b = m.layout.spec("h0.attn.b_qkv").unwrap();
        assert!(m.params[b.range()].iter().all(|&v| v == 0.0));
        let g = m.layout.spec("lnf.g").unwrap();
        assert!(m.params[g.range()].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bad_head_count_is_rejected() {
        let err = Model::init(ModelConfig { vocab_size: 20, dim: 6, heads: 4, layers: 1, max_len: 8, seed: 0 }).unwrap_err();
        assert!(matches!(err, ModelError::HeadsDoNotDivide { dim: 6, heads: 4 }));
    }

    #[test]
    fn embedding_shape() {
        let m = Model::init(ModelConfig { vocab_size: 486, dim: 128, heads: 4, layers: 1, max_len: 8, seed: 0 }).unwrap();
        let s = m.layout.spec("tok_emb").unwrap();
        assert_eq!((s.rows, s.cols), (486, 128));
    }

    #[test]
    fn forward_is_causal() {
        let m = tiny(20, 1);
        let a = [1u32, 5, 7, 9, 2, 3];
        let mut b = a;
        b[5] = 11;
        let la = &m.forward(&[&a]).unwrap()[0];
        let lb = &m.forward(&[&b]).unwrap()[0];
        assert_eq!(la.slice(s![..5, ..]), lb.slice(s![..5, ..]));
        assert_ne!(la.row(5), lb.row(5));
    }

    #[test]
    fn single_token_and_identical_rows() {
        let m = tiny(20, 1);
        let out = m.forward(&[&[4]]).unwrap();
        assert_eq!(out[0].dim(), (1, 20));
        assert!(out[0].iter().all(|v| v.is_finite()));
        let row = [3u32, 4, 5];
        let out = m.forward(&[&row, &row]).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = tiny(20, 1);
        assert!(matches!(m.forward(&[&[20]]), Err(ModelError::TokenOutOfRange { .. })));
        assert!(matches!(m.forward(&[&[1; 17]]), Err(ModelError::TooLong { .. })));
        assert!(matches!(m.loss(&[&[1, 0, 0]]), Err(ModelError::AllPadTargets)));
        assert!(matches!(m.loss(&[&[1]]), Err(ModelError::TooShort { .. })));
    }

    #[test]
    fn untrained_loss_is_near_uniform() {
        let m = Model::init(ModelConfig { vocab_size: 486, dim: 32, heads: 4, layers: 2, max_len: 64, seed: 7 }).unwrap();
        let seq: Vec<u32> = (1..40).map(|i| (i * 37 % 485 + 1) as u32).collect();
        let loss = m.loss(&[&seq]).unwrap();
        let uniform = (486f64).ln();
        assert!((loss - uniform).abs() / uniform < 0.05, "{loss} vs {uniform}");
    }

    #[test]
    fn incremental_steps_match_full_forward() {
        let m = Model::init(ModelConfig { vocab_size: 30, dim: 16, heads: 4, layers: 2, max_len: 16, seed: 2 }).unwrap();
        let ids = [1u32, 7, 3, 29, 4, 4, 12];
        let full = &m.forward(&[&ids]).unwrap()[0];
        let mut cache = m.new_cache();
        for (t, &id) in ids.iter().enumerate() {
            let logits = m.step(&mut cache, id).unwrap();
            for (a, b) in logits.iter().zip(full.row(t)) {
                assert!((a - b).abs() < 1e-10, "position {t}: {a} vs {b}");
            }
        }
        assert_eq!(cache.len(), ids.len());
    }

    #[test]
    fn pad_targets_do_not_contribute() {
        let m = tiny(20, 5);
        let a = m.loss(&[&[1, 2, 3]]).unwrap();
        let b = m.loss(&[&[1, 2, 3, 0, 0]]).unwrap();
        assert!((a - b).abs() < 1e-12);
        let (_, ga) = m.loss_and_grads(&[&[1, 2, 3]]).unwrap();
        let (_, gb) = m.loss_and_grads(&[&[1, 2, 3, 0, 0]]).unwrap();
        // pad inputs sit after every real target, so the causal mask hides them
        let w = m.layout.spec("w_out").unwrap();
        for i in w.range() {
            assert!((ga[i] - gb[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = Model::init(ModelConfig { vocab_size: 20, dim: 8, heads: 2, layers: 2, max_len: 8, seed: 11 }).unwrap();
        let batch: [&[u32]; 2] = [&[1, 4, 9, 19, 3], &[2, 2, 7, 0]];
        let (_, grads) = m.loss_and_grads(&batch).unwrap();
        let h = 1e-5;
        for i in (0..m.num_params()).step_by(7) {
            let mut p = m.clone();
            p.params[i] += h;
            let up = p.loss(&batch).unwrap();
            p.params[i] -= 2.0 * h;
            let down = p.loss(&batch).unwrap();
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-8);
            assert!(err < 1e-4 || (fd - grads[i]).abs() < 1e-9, "param {i}: fd {fd} vs {}", grads[i]);
        }
    }
}
