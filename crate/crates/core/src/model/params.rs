//! Flat parameter layout.
//!
//! Every tensor lives in one contiguous `Vec<f64>`, in this order:
//!
//! 1. embedding (vocab x embed)
//! 2. encoder forward stack, then encoder backward stack; per layer the
//!    gate weights (4H x (in + H), gates ordered input/forget/cell/output)
//!    followed by the gate bias (4H)
//! 3. bridge weight (H x H) and bias (H)
//! 4. attention query (A x H), key (A x 2H), bias (A), score vector (A)
//! 5. decoder stack, same per-layer shape as the encoder
//! 6. output projection (vocab x (H + 2H)) and bias (vocab)
//!
//! Unconditional models have empty encoder, bridge and attention ranges,
//! and their decoder/output widths drop the context term.

use std::ops::Range;

use super::config::ModelConfig;

/// Named parameter groups, used for gradient checking and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Embedding,
    EncoderForward,
    EncoderBackward,
    Bridge,
    Attention,
    Decoder,
    Output,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::Embedding,
        ParamGroup::EncoderForward,
        ParamGroup::EncoderBackward,
        ParamGroup::Bridge,
        ParamGroup::Attention,
        ParamGroup::Decoder,
        ParamGroup::Output,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LstmLayout {
    pub input: usize,
    pub w: Range<usize>,
    pub b: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub embedding: Range<usize>,
    pub enc_fwd: Vec<LstmLayout>,
    pub enc_bwd: Vec<LstmLayout>,
    pub bridge_w: Range<usize>,
    pub bridge_b: Range<usize>,
    pub att_q: Range<usize>,
    pub att_k: Range<usize>,
    pub att_b: Range<usize>,
    pub att_v: Range<usize>,
    pub dec: Vec<LstmLayout>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }

    fn lstm_stack(&mut self, first_input: usize, hidden: usize, layers: usize) -> Vec<LstmLayout> {
        (0..layers)
            .map(|l| {
                let input = if l == 0 { first_input } else { hidden };
                LstmLayout {
                    input,
                    w: self.take(4 * hidden * (input + hidden)),
                    b: self.take(4 * hidden),
                }
            })
            .collect()
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let h = cfg.hidden_size;
        let ctx = cfg.context_dim();
        let att = cfg.attention_dim();
        let enc_layers = if cfg.conditional { cfg.num_layers } else { 0 };
        let bridge = if cfg.conditional { h } else { 0 };
        let mut c = Cursor(0);
        let embedding = c.take(cfg.vocab_size * cfg.embed_dim);
        let enc_fwd = c.lstm_stack(cfg.embed_dim, h, enc_layers);
        let enc_bwd = c.lstm_stack(cfg.embed_dim, h, enc_layers);
        let bridge_w = c.take(bridge * bridge);
        let bridge_b = c.take(bridge);
        let att_q = c.take(att * h);
        let att_k = c.take(att * ctx);
        let att_b = c.take(att);
        let att_v = c.take(att);
        let dec = c.lstm_stack(cfg.embed_dim + ctx, h, cfg.num_layers);
        let out_w = c.take(cfg.vocab_size * (h + ctx));
        let out_b = c.take(cfg.vocab_size);
        Layout {
            embedding,
            enc_fwd,
            enc_bwd,
            bridge_w,
            bridge_b,
            att_q,
            att_k,
            att_b,
            att_v,
            dec,
            out_w,
            out_b,
            total: c.0,
        }
    }

    fn stack_range(stack: &[LstmLayout]) -> Range<usize> {
        match (stack.first(), stack.last()) {
            (Some(first), Some(last)) => first.w.start..last.b.end,
            _ => 0..0,
        }
    }

    /// Contiguous range covered by a parameter group (possibly empty).
    pub fn group_range(&self, group: ParamGroup) -> Range<usize> {
        match group {
            ParamGroup::Embedding => self.embedding.clone(),
            ParamGroup::EncoderForward => Self::stack_range(&self.enc_fwd),
            ParamGroup::EncoderBackward => Self::stack_range(&self.enc_bwd),
            ParamGroup::Bridge => self.bridge_w.start..self.bridge_b.end,
            ParamGroup::Attention => self.att_q.start..self.att_v.end,
            ParamGroup::Decoder => Self::stack_range(&self.dec),
            ParamGroup::Output => self.out_w.start..self.out_b.end,
        }
    }
}
