use super::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Token and position tables.
    Embedding,
    /// Dense matrices, including the output projection. The only decayed kind.
    Weight,
    Bias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub kind: ParamKind,
}

impl ParamSpec {
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

/// Offsets of one transformer block's tensors inside the flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_proj: usize,
    pub b_proj: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_fc2: usize,
    pub b_fc2: usize,
}

/// Declared order of every tensor; also the checkpoint order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub specs: Vec<ParamSpec>,
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub w_out: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.dim;
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, rows: usize, cols: usize, kind: ParamKind| {
            let at = offset;
            specs.push(ParamSpec { name, rows, cols, offset: at, kind });
            offset += rows * cols;
            at
        };
        let tok_emb = add("tok_emb".into(), cfg.vocab_size, d, ParamKind::Embedding);
        let pos_emb = add("pos_emb".into(), cfg.max_len, d, ParamKind::Embedding);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let n = |s: &str| format!("h{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: add(n("ln1.g"), 1, d, ParamKind::NormGain),
                ln1_b: add(n("ln1.b"), 1, d, ParamKind::NormBias),
                w_qkv: add(n("attn.w_qkv"), d, 3 * d, ParamKind::Weight),
                b_qkv: add(n("attn.b_qkv"), 1, 3 * d, ParamKind::Bias),
                w_proj: add(n("attn.w_proj"), d, d, ParamKind::Weight),
                b_proj: add(n("attn.b_proj"), 1, d, ParamKind::Bias),
                ln2_g: add(n("ln2.g"), 1, d, ParamKind::NormGain),
                ln2_b: add(n("ln2.b"), 1, d, ParamKind::NormBias),
                w_fc: add(n("mlp.w_fc"), d, 4 * d, ParamKind::Weight),
                b_fc: add(n("mlp.b_fc"), 1, 4 * d, ParamKind::Bias),
                w_fc2: add(n("mlp.w_fc2"), 4 * d, d, ParamKind::Weight),
                b_fc2: add(n("mlp.b_fc2"), 1, d, ParamKind::Bias),
            });
        }
        let lnf_g = add("lnf.g".into(), 1, d, ParamKind::NormGain);
        let lnf_b = add("lnf.b".into(), 1, d, ParamKind::NormBias);
        let w_out = add("w_out".into(), d, cfg.vocab_size, ParamKind::Weight);
        ParamLayout { specs, tok_emb, pos_emb, layers, lnf_g, lnf_b, w_out, total: offset }
    }

    pub fn spec(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Per-element weight-decay mask.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for s in self.specs.iter().filter(|s| s.kind == ParamKind::Weight) {
            mask[s.range()].fill(true);
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_dense_and_ordered() {
        let cfg = ModelConfig { vocab_size: 486, dim: 128, heads: 4, layers: 2, max_len: 1024, seed: 0 };
        let l = ParamLayout::new(&cfg);
        let mut at = 0;
        for s in &l.specs {
            assert_eq!(s.offset, at, "{}", s.name);
            at += s.len();
        }
        assert_eq!(at, l.total);
        let emb = l.spec("tok_emb").unwrap();
        assert_eq!((emb.rows, emb.cols), (486, 128));
        let out = l.spec("w_out").unwrap();
        assert_eq!((out.rows, out.cols), (128, 486));
        let per_layer = 12 * 128 * 128 + 13 * 128;
        assert_eq!(l.total, 486 * 128 * 2 + 1024 * 128 + 2 * per_layer + 2 * 128);
    }
}
