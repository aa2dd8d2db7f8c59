//! Hand-built models with exactly known output distributions.
//!
//! These are used by tests and the acceptance suite to pin down decoding,
//! reward and metric behaviour without training anything.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Seq2SeqModel};

const SATURATION: f64 = 50.0;

/// A model whose next-token distribution is uniform at every step.
pub fn uniform_model(config: ModelConfig, seed: u64) -> Result<Seq2SeqModel> {
    let mut model = Seq2SeqModel::new(config, seed, crate::model::DEFAULT_INIT_SCALE)?;
    model.zero_output_layer();
    Ok(model)
}

/// A model whose next-token logits depend only on the previous token:
/// at every step the logits are `logits(prev)`, where `prev` is SOS on the
/// first step. The source sequence has no influence.
///
/// Each LSTM layer copies a saturated one-hot of the previous token upward,
/// so the construction is exact to floating-point rounding as long as the
/// logits stay moderate relative to `1e15`.
pub fn scripted_model<F>(
    vocab_size: usize,
    num_layers: usize,
    conditional: bool,
    logits: F,
) -> Result<Seq2SeqModel>
where
    F: Fn(usize) -> Vec<f64>,
{
    let v = vocab_size;
    let mut config = ModelConfig::new(v, v.max(4), v).with_layers(num_layers);
    config.conditional = conditional;
    config.validate()?;
    let mut model = Seq2SeqModel::from_params(config.clone(), vec![0.0; model_size(&config)])?;

    let rows: Vec<Vec<f64>> = (0..v)
        .map(|t| {
            let mut row = vec![0.0; config.embed_dim];
            row[t] = 1.0;
            row
        })
        .collect();
    model.set_embeddings(&rows)?;

    let h = config.hidden_size;
    let dec = model.layout().dec.clone();
    let out_w = model.layout().out_w.clone();
    let feat_width = h + config.context_dim();
    let params = model.params_mut();
    for lay in &dec {
        let cols = lay.input + h;
        let b = &mut params[lay.b.clone()];
        b[..h].fill(SATURATION);
        b[h..2 * h].fill(-SATURATION);
        b[3 * h..].fill(SATURATION);
        let w = &mut params[lay.w.clone()];
        for k in 0..h {
            w[(2 * h + k) * cols + k] = SATURATION;
        }
    }
    let scale = 1.0_f64.tanh();
    let w = &mut params[out_w];
    for prev in 0..v {
        let l = logits(prev);
        if l.len() != v {
            return Err(Error::InvalidArgument(format!(
                "logits for token {prev} have length {}, expected {v}",
                l.len()
            )));
        }
        for (j, value) in l.iter().enumerate() {
            w[j * feat_width + prev] = value / scale;
        }
    }
    Ok(model)
}

fn model_size(config: &ModelConfig) -> usize {
    crate::model::Layout::new(config).total
}
