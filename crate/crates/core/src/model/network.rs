//! Bidirectional LSTM encoder, additive attention and LSTM decoder with
//! hand-written backpropagation through time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EOS, SOS};
use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::lstm::{self, CellCache};
use super::math::{add_assign, dot, log_softmax, matvec_add, matvec_t_add, outer_add, softmax};
use super::params::{Layout, LstmLayout, ParamGroup};

/// Default half-width of the uniform parameter initialization.
pub const DEFAULT_INIT_SCALE: f64 = 0.1;

/// Full parameter set of an encoder-decoder (or, when unconditional, a
/// decoder-only language model).
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// Recurrent state of the decoder stack between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

impl DecoderState {
    /// Hidden state of the top layer (the attention query).
    pub fn top(&self) -> &[f64] {
        self.h.last().expect("at least one layer")
    }
}

struct EncoderPass {
    states: Vec<Vec<f64>>,
    keys: Vec<Vec<f64>>,
    fwd_caches: Vec<Vec<CellCache>>,
    bwd_caches: Vec<Vec<CellCache>>,
    fwd_last: Vec<f64>,
    bridge_out: Vec<f64>,
}

struct StepCache {
    prev_token: usize,
    s_prev: Vec<f64>,
    att_u: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    cells: Vec<CellCache>,
    feat: Vec<f64>,
    log_probs: Vec<f64>,
}

/// An encoded source ready for step-by-step decoding.
pub struct DecoderSession<'m> {
    model: &'m Seq2SeqModel,
    encoder: Option<EncoderPass>,
}

impl<'m> DecoderSession<'m> {
    pub fn initial_state(&self) -> DecoderState {
        self.model.initial_state(self.encoder.as_ref())
    }

    /// Advances one step from `state` after feeding `prev_token`; returns the
    /// new state and the log-distribution over the next token.
    pub fn step(&self, state: &DecoderState, prev_token: usize) -> (DecoderState, Vec<f64>) {
        let (next, cache) = self.model.step(self.encoder.as_ref(), state, prev_token);
        (next, cache.log_probs)
    }

    /// Attention weights used when stepping from `state`.
    pub fn attention_weights(&self, state: &DecoderState) -> Option<Vec<f64>> {
        self.encoder
            .as_ref()
            .map(|enc| self.model.attention(enc, state.top()).1)
    }

    pub fn model(&self) -> &Seq2SeqModel {
        self.model
    }
}

impl Seq2SeqModel {
    /// Random initialization, uniform in `[-init_scale, init_scale]`.
    pub fn new(config: ModelConfig, seed: u64, init_scale: f64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..layout.total)
            .map(|_| rng.gen_range(-init_scale..=init_scale))
            .collect();
        Ok(Seq2SeqModel {
            config,
            layout,
            params,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::ConfigMismatch {
                field: "parameter count",
                expected: layout.total.to_string(),
                found: params.len().to_string(),
            });
        }
        Ok(Seq2SeqModel {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Flat index range of a parameter group.
    pub fn group_range(&self, group: ParamGroup) -> std::ops::Range<usize> {
        self.layout.group_range(group)
    }

    /// Index range of one embedding row.
    pub fn embedding_row(&self, token: usize) -> std::ops::Range<usize> {
        let d = self.config.embed_dim;
        let start = self.layout.embedding.start + token * d;
        start..start + d
    }

    /// Overwrites the embedding table, one row per token id.
    pub fn set_embeddings(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        if rows.len() != self.config.vocab_size {
            return Err(Error::ConfigMismatch {
                field: "vocab_size",
                expected: self.config.vocab_size.to_string(),
                found: rows.len().to_string(),
            });
        }
        for (token, row) in rows.iter().enumerate() {
            if row.len() != self.config.embed_dim {
                return Err(Error::ConfigMismatch {
                    field: "embed_dim",
                    expected: self.config.embed_dim.to_string(),
                    found: row.len().to_string(),
                });
            }
            let range = self.embedding_row(token);
            self.params[range].copy_from_slice(row);
        }
        Ok(())
    }

    /// Sets every output weight and bias to zero (uniform next-token
    /// distribution).
    pub fn zero_output_layer(&mut self) {
        let range = self.layout.group_range(ParamGroup::Output);
        self.params[range].fill(0.0);
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.config.vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn embedding(&self, token: usize) -> &[f64] {
        &self.params[self.embedding_row(token)]
    }

    fn lstm_params(&self, l: &LstmLayout) -> (&[f64], &[f64]) {
        (&self.params[l.w.clone()], &self.params[l.b.clone()])
    }

    fn run_stack(
        &self,
        stack: &[LstmLayout],
        inputs: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, Vec<Vec<CellCache>>) {
        let hidden = self.config.hidden_size;
        let mut layer_in: Vec<Vec<f64>> = inputs.to_vec();
        let mut caches = Vec::with_capacity(stack.len());
        for lay in stack {
            let (w, b) = self.lstm_params(lay);
            let mut h = vec![0.0; hidden];
            let mut c = vec![0.0; hidden];
            let mut outs = Vec::with_capacity(inputs.len());
            let mut layer_caches = Vec::with_capacity(inputs.len());
            for x in &layer_in {
                let (h_new, c_new, cache) = lstm::forward(w, b, x, &h, &c);
                outs.push(h_new.clone());
                layer_caches.push(cache);
                h = h_new;
                c = c_new;
            }
            caches.push(layer_caches);
            layer_in = outs;
        }
        (layer_in, caches)
    }

    fn encode_pass(&self, source: &[usize]) -> Result<EncoderPass> {
        if source.is_empty() {
            return Err(Error::EmptyInput { what: "source" });
        }
        self.check_ids(source)?;
        let h = self.config.hidden_size;
        let embedded: Vec<Vec<f64>> = source.iter().map(|&t| self.embedding(t).to_vec()).collect();
        let (fwd_top, fwd_caches) = self.run_stack(&self.layout.enc_fwd, &embedded);
        let reversed: Vec<Vec<f64>> = embedded.iter().rev().cloned().collect();
        let (mut bwd_top, bwd_caches) = self.run_stack(&self.layout.enc_bwd, &reversed);
        bwd_top.reverse();
        let states: Vec<Vec<f64>> = fwd_top
            .iter()
            .zip(&bwd_top)
            .map(|(f, b)| [f.as_slice(), b.as_slice()].concat())
            .collect();
        let att_k = &self.params[self.layout.att_k.clone()];
        let keys = states
            .iter()
            .map(|s| {
                let mut k = vec![0.0; h];
                matvec_add(att_k, 2 * h, s, &mut k);
                k
            })
            .collect();
        let fwd_last = fwd_top.last().expect("non-empty source").clone();
        let mut bridge_out = self.params[self.layout.bridge_b.clone()].to_vec();
        matvec_add(
            &self.params[self.layout.bridge_w.clone()],
            h,
            &fwd_last,
            &mut bridge_out,
        );
        bridge_out.iter_mut().for_each(|v| *v = v.tanh());
        Ok(EncoderPass {
            states,
            keys,
            fwd_caches,
            bwd_caches,
            fwd_last,
            bridge_out,
        })
    }

    /// One encoder state per source position: forward and backward top-layer
    /// hidden states concatenated (width 2 x hidden_size).
    pub fn encode(&self, source: &[usize]) -> Result<Vec<Vec<f64>>> {
        if !self.config.conditional {
            return Err(Error::InvalidArgument(
                "unconditional model has no encoder".into(),
            ));
        }
        Ok(self.encode_pass(source)?.states)
    }

    /// Returns (tanh pre-scores per position, softmax weights, context).
    fn attention_full(
        &self,
        enc: &EncoderPass,
        query: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let h = self.config.hidden_size;
        let att_q = &self.params[self.layout.att_q.clone()];
        let att_b = &self.params[self.layout.att_b.clone()];
        let att_v = &self.params[self.layout.att_v.clone()];
        let mut q = att_b.to_vec();
        matvec_add(att_q, h, query, &mut q);
        let u: Vec<Vec<f64>> = enc
            .keys
            .iter()
            .map(|k| q.iter().zip(k).map(|(a, b)| (a + b).tanh()).collect())
            .collect();
        let scores: Vec<f64> = u.iter().map(|uj| dot(att_v, uj)).collect();
        let alpha = softmax(&scores);
        let mut ctx = vec![0.0; 2 * h];
        for (a, s) in alpha.iter().zip(&enc.states) {
            for (c, v) in ctx.iter_mut().zip(s) {
                *c += a * v;
            }
        }
        (u, alpha, ctx)
    }

    fn attention(&self, enc: &EncoderPass, query: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (_, alpha, ctx) = self.attention_full(enc, query);
        (ctx, alpha)
    }

    /// Additive attention of a decoder state over encoder states; returns
    /// (context, weights).
    pub fn attend(
        &self,
        decoder_state: &[f64],
        encoder_states: &[Vec<f64>],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.config.conditional {
            return Err(Error::InvalidArgument(
                "unconditional model has no attention".into(),
            ));
        }
        if encoder_states.is_empty() {
            return Err(Error::EmptyInput {
                what: "encoder states",
            });
        }
        let h = self.config.hidden_size;
        if decoder_state.len() != h || encoder_states.iter().any(|s| s.len() != 2 * h) {
            return Err(Error::InvalidArgument(
                "attention input widths do not match hidden_size".into(),
            ));
        }
        let att_k = &self.params[self.layout.att_k.clone()];
        let keys = encoder_states
            .iter()
            .map(|s| {
                let mut k = vec![0.0; h];
                matvec_add(att_k, 2 * h, s, &mut k);
                k
            })
            .collect();
        let pass = EncoderPass {
            states: encoder_states.to_vec(),
            keys,
            fwd_caches: Vec::new(),
            bwd_caches: Vec::new(),
            fwd_last: Vec::new(),
            bridge_out: Vec::new(),
        };
        Ok(self.attention(&pass, decoder_state))
    }

    fn initial_state(&self, enc: Option<&EncoderPass>) -> DecoderState {
        let (h, l) = (self.config.hidden_size, self.config.num_layers);
        let h0 = enc.map_or_else(|| vec![0.0; h], |e| e.bridge_out.clone());
        DecoderState {
            h: vec![h0; l],
            c: vec![vec![0.0; h]; l],
        }
    }

    fn step(
        &self,
        enc: Option<&EncoderPass>,
        state: &DecoderState,
        prev_token: usize,
    ) -> (DecoderState, StepCache) {
        let s_prev = state.top().to_vec();
        let (att_u, alpha, ctx) = match enc {
            Some(e) => self.attention_full(e, &s_prev),
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        let mut x = self.embedding(prev_token).to_vec();
        x.extend_from_slice(&ctx);
        let mut next = DecoderState {
            h: Vec::with_capacity(state.h.len()),
            c: Vec::with_capacity(state.c.len()),
        };
        let mut cells = Vec::with_capacity(self.layout.dec.len());
        for (l, lay) in self.layout.dec.iter().enumerate() {
            let (w, b) = self.lstm_params(lay);
            let (h, c, cache) = lstm::forward(w, b, &x, &state.h[l], &state.c[l]);
            cells.push(cache);
            x = h.clone();
            next.h.push(h);
            next.c.push(c);
        }
        let mut feat = x;
        feat.extend_from_slice(&ctx);
        let mut logits = self.params[self.layout.out_b.clone()].to_vec();
        matvec_add(
            &self.params[self.layout.out_w.clone()],
            feat.len(),
            &feat,
            &mut logits,
        );
        let log_probs = log_softmax(&logits);
        (
            next,
            StepCache {
                prev_token,
                s_prev,
                att_u,
                alpha,
                cells,
                feat,
                log_probs,
            },
        )
    }

    /// Encodes `source` (ignored for unconditional models) for decoding.
    pub fn session(&self, source: &[usize]) -> Result<DecoderSession<'_>> {
        let encoder = if self.config.conditional {
            Some(self.encode_pass(source)?)
        } else {
            None
        };
        Ok(DecoderSession {
            model: self,
            encoder,
        })
    }

    /// Log-probability of each emitted token in `steps` under teacher forcing.
    pub fn step_log_probs(&self, source: &[usize], steps: &[usize]) -> Result<Vec<f64>> {
        self.check_ids(steps)?;
        let session = self.session(source)?;
        let mut state = session.initial_state();
        let mut prev = SOS;
        let mut out = Vec::with_capacity(steps.len());
        for &tok in steps {
            let (next, lp) = session.step(&state, prev);
            out.push(lp[tok]);
            state = next;
            prev = tok;
        }
        Ok(out)
    }

    /// log p(target | source), summed over the target tokens and EOS.
    pub fn sequence_log_prob(&self, source: &[usize], target: &[usize]) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::EmptyInput { what: "target" });
        }
        let steps: Vec<usize> = target.iter().copied().chain([EOS]).collect();
        Ok(self.step_log_probs(source, &steps)?.iter().sum())
    }

    /// Adds `weight * d(-sum log p(steps | source))/d(params)` into `grad`
    /// and returns the summed log-probability.
    ///
    /// `steps` are the emitted tokens; the decoder is fed SOS followed by
    /// `steps[..len-1]`.
    pub fn accumulate_gradient(
        &self,
        source: &[usize],
        steps: &[usize],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        if grad.len() != self.layout.total {
            return Err(Error::InvalidArgument(
                "gradient buffer size mismatch".into(),
            ));
        }
        if steps.is_empty() {
            return Err(Error::EmptyInput { what: "target" });
        }
        self.check_ids(steps)?;
        let encoder = if self.config.conditional {
            Some(self.encode_pass(source)?)
        } else {
            None
        };
        let mut state = self.initial_state(encoder.as_ref());
        let mut caches = Vec::with_capacity(steps.len());
        let mut prev = SOS;
        let mut total = 0.0;
        for &tok in steps {
            let (next, cache) = self.step(encoder.as_ref(), &state, prev);
            total += cache.log_probs[tok];
            caches.push(cache);
            state = next;
            prev = tok;
        }
        self.backward(source, encoder.as_ref(), &caches, steps, weight, grad);
        Ok(total)
    }

    fn backward(
        &self,
        source: &[usize],
        enc: Option<&EncoderPass>,
        caches: &[StepCache],
        gold: &[usize],
        weight: f64,
        grad: &mut [f64],
    ) {
        let cfg = &self.config;
        let (h, d) = (cfg.hidden_size, cfg.embed_dim);
        let layers = cfg.num_layers;
        let feat_dim = h + cfg.context_dim();
        let lay = &self.layout;

        let mut dh_next = vec![vec![0.0; h]; layers];
        let mut dc_next = vec![vec![0.0; h]; layers];
        let mut denc = enc.map_or_else(Vec::new, |e| vec![vec![0.0; 2 * h]; e.states.len()]);

        for (sc, &tok) in caches.iter().zip(gold).rev() {
            let mut dlogits: Vec<f64> = sc.log_probs.iter().map(|lp| weight * lp.exp()).collect();
            dlogits[tok] -= weight;
            outer_add(&mut grad[lay.out_w.clone()], &dlogits, &sc.feat);
            add_assign(&mut grad[lay.out_b.clone()], &dlogits);
            let mut dfeat = vec![0.0; feat_dim];
            matvec_t_add(
                &self.params[lay.out_w.clone()],
                feat_dim,
                &dlogits,
                &mut dfeat,
            );
            let mut dctx = dfeat.split_off(h);
            let mut dabove = dfeat;

            for l in (0..layers).rev() {
                let dl = &lay.dec[l];
                let dh: Vec<f64> = dabove.iter().zip(&dh_next[l]).map(|(a, b)| a + b).collect();
                let (seg_w, seg_b) = grad[dl.w.start..dl.b.end].split_at_mut(dl.w.len());
                let (dx, dhp, dcp) = lstm::backward(
                    &sc.cells[l],
                    &self.params[dl.w.clone()],
                    &dh,
                    &dc_next[l],
                    seg_w,
                    seg_b,
                );
                dh_next[l] = dhp;
                dc_next[l] = dcp;
                dabove = dx;
            }
            let emb_row = self.embedding_row(sc.prev_token);
            add_assign(&mut grad[emb_row], &dabove[..d]);

            if let Some(e) = enc {
                add_assign(&mut dctx, &dabove[d..]);
                self.attention_backward(e, sc, &dctx, &mut denc, &mut dh_next[layers - 1], grad);
            }
        }

        let Some(e) = enc else { return };

        // Every decoder layer starts from the same bridged state.
        let mut dpre = vec![0.0; h];
        for dh0 in &dh_next {
            add_assign(&mut dpre, dh0);
        }
        for (g, y) in dpre.iter_mut().zip(&e.bridge_out) {
            *g *= 1.0 - y * y;
        }
        outer_add(&mut grad[lay.bridge_w.clone()], &dpre, &e.fwd_last);
        add_assign(&mut grad[lay.bridge_b.clone()], &dpre);
        let mut dfwd_last = vec![0.0; h];
        matvec_t_add(&self.params[lay.bridge_w.clone()], h, &dpre, &mut dfwd_last);

        let n = source.len();
        let mut dfwd: Vec<Vec<f64>> = denc.iter().map(|v| v[..h].to_vec()).collect();
        add_assign(&mut dfwd[n - 1], &dfwd_last);
        let dbwd: Vec<Vec<f64>> = denc.iter().rev().map(|v| v[h..].to_vec()).collect();

        let din_fwd = self.stack_backward(&lay.enc_fwd, &e.fwd_caches, dfwd, grad);
        let din_bwd = self.stack_backward(&lay.enc_bwd, &e.bwd_caches, dbwd, grad);
        for (pos, &tok) in source.iter().enumerate() {
            let row = self.embedding_row(tok);
            add_assign(&mut grad[row.clone()], &din_fwd[pos]);
            add_assign(&mut grad[row], &din_bwd[n - 1 - pos]);
        }
    }

    fn attention_backward(
        &self,
        enc: &EncoderPass,
        sc: &StepCache,
        dctx: &[f64],
        denc: &mut [Vec<f64>],
        ds_prev: &mut [f64],
        grad: &mut [f64],
    ) {
        let h = self.config.hidden_size;
        let lay = &self.layout;
        let att_v = &self.params[lay.att_v.clone()];
        let att_k = &self.params[lay.att_k.clone()];

        let dalpha: Vec<f64> = enc.states.iter().map(|s| dot(dctx, s)).collect();
        for (dj, &a) in denc.iter_mut().zip(&sc.alpha) {
            for (g, c) in dj.iter_mut().zip(dctx) {
                *g += a * c;
            }
        }
        let mean: f64 = sc.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let mut da_sum = vec![0.0; h];
        for j in 0..enc.states.len() {
            let de = sc.alpha[j] * (dalpha[j] - mean);
            if de == 0.0 {
                continue;
            }
            let u = &sc.att_u[j];
            let grad_v = &mut grad[lay.att_v.clone()];
            for (g, uk) in grad_v.iter_mut().zip(u) {
                *g += de * uk;
            }
            let da: Vec<f64> = u
                .iter()
                .zip(att_v)
                .map(|(uk, vk)| de * vk * (1.0 - uk * uk))
                .collect();
            outer_add(&mut grad[lay.att_k.clone()], &da, &enc.states[j]);
            matvec_t_add(att_k, 2 * h, &da, &mut denc[j]);
            add_assign(&mut da_sum, &da);
        }
        outer_add(&mut grad[lay.att_q.clone()], &da_sum, &sc.s_prev);
        add_assign(&mut grad[lay.att_b.clone()], &da_sum);
        matvec_t_add(&self.params[lay.att_q.clone()], h, &da_sum, ds_prev);
    }

    /// BPTT through a stack; `dtop` and the result are in processing order.
    fn stack_backward(
        &self,
        stack: &[LstmLayout],
        caches: &[Vec<CellCache>],
        dtop: Vec<Vec<f64>>,
        grad: &mut [f64],
    ) -> Vec<Vec<f64>> {
        let h = self.config.hidden_size;
        let mut d_out = dtop;
        for (lay, layer_caches) in stack.iter().zip(caches).rev() {
            let w = &self.params[lay.w.clone()];
            let (seg_w, seg_b) = grad[lay.w.start..lay.b.end].split_at_mut(lay.w.len());
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut d_in = vec![Vec::new(); layer_caches.len()];
            for t in (0..layer_caches.len()).rev() {
                let dh: Vec<f64> = d_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (dx, dhp, dcp) =
                    lstm::backward(&layer_caches[t], w, &dh, &dc_next, seg_w, seg_b);
                d_in[t] = dx;
                dh_next = dhp;
                dc_next = dcp;
            }
            d_out = d_in;
        }
        d_out
    }
}
