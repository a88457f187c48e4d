//! The sequence model: LSTM encoder, single-head residual self-attention
//! over the encoder outputs, LSTM decoder with pointer attention over the
//! input points plus a learned end-sentinel slot, task-aware score masking,
//! teacher-forced training, and greedy/beam decoding.

mod checkpoint;
mod decoder;
mod encoder;
mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointDtype};
pub use decoder::{
    beam_decode, greedy_decode, mask_scores, pointer_scores, BeamVariant, DecodeOutcome,
    DecodeState, DecoderChoice,
};
pub use encoder::{encode, self_attend, EncoderOutput};
pub use training::{
    accumulate_gradients, forward_loss, train, train_step, EpochReport, TrainOptions, TrainSummary,
};

use crate::nncore::{xavier_init, LstmWeights, NnError, Parameter, Tensor};
use crate::Task;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartToken {
    /// Zero vector as the first decoder input.
    Zero,
    /// Trainable start embedding.
    Learned,
}

impl std::str::FromStr for StartToken {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(StartToken::Zero),
            "learned" => Ok(StartToken::Learned),
            other => Err(format!("unknown start token {other:?} (expected zero or learned)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    /// LSTM hidden width, also the embedding and pointer-attention width.
    pub hidden: usize,
    pub self_attention: bool,
    /// Query/key projection width.
    pub d_k: usize,
    /// Value projection width; the residual connection requires `d_v == hidden`.
    pub d_v: usize,
    pub mask_enabled: bool,
    pub start_token: StartToken,
    pub beam_width: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
}

impl ModelConfig {
    pub fn new(task: Task) -> Self {
        ModelConfig {
            task,
            hidden: 256,
            self_attention: true,
            d_k: 256,
            d_v: 256,
            mask_enabled: true,
            start_token: StartToken::Zero,
            beam_width: 4,
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 128,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self.d_k = hidden;
        self.d_v = hidden;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || self.d_k == 0 || self.d_v == 0 {
            return Err(ModelError::ConfigInvalid("hidden, d_k, d_v must be at least 1".into()));
        }
        if self.d_v != self.hidden {
            return Err(ModelError::ConfigInvalid(
                "the residual connection requires d_v == hidden".into(),
            ));
        }
        if self.beam_width == 0 {
            return Err(ModelError::ConfigInvalid("beam width must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::ConfigInvalid("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// All learnable tensors. Attention and start-token tensors are always
/// allocated (so a seed fixes every draw regardless of configuration) but
/// only configured ones count as live parameters.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Input embedding, 2 -> H, shared by encoder inputs and decoder inputs.
    pub emb_w: Parameter,
    pub emb_b: Parameter,
    pub enc: LstmWeights,
    pub dec: LstmWeights,
    pub attn_q: Parameter,
    pub attn_k: Parameter,
    pub attn_v: Parameter,
    pub ptr_w1: Parameter,
    pub ptr_w2: Parameter,
    pub ptr_v: Parameter,
    /// Learned embedding scored as the end-of-sequence pointer slot.
    pub end_emb: Parameter,
    pub start_emb: Parameter,
}

impl ModelParams {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vec_param = |name: &str, rng: &mut ChaCha8Rng| {
            let t = xavier_init([1, h], rng);
            Parameter::new(name, Tensor::from_vec(&[h], t.data().to_vec()))
        };
        Ok(ModelParams {
            config,
            emb_w: Parameter::new("emb.w", xavier_init([2, h], &mut rng)),
            emb_b: Parameter::new("emb.b", Tensor::zeros(&[h])),
            enc: LstmWeights::new("enc", h, h, &mut rng),
            dec: LstmWeights::new("dec", h, h, &mut rng),
            attn_q: Parameter::new("attn.wq", xavier_init([h, config.d_k], &mut rng)),
            attn_k: Parameter::new("attn.wk", xavier_init([h, config.d_k], &mut rng)),
            attn_v: Parameter::new("attn.wv", xavier_init([h, config.d_v], &mut rng)),
            ptr_w1: Parameter::new("ptr.w1", xavier_init([h, h], &mut rng)),
            ptr_w2: Parameter::new("ptr.w2", xavier_init([h, h], &mut rng)),
            ptr_v: vec_param("ptr.v", &mut rng),
            end_emb: vec_param("end_emb", &mut rng),
            start_emb: vec_param("start_emb", &mut rng),
        })
    }

    /// Live parameters in a fixed order; must mirror [`Self::params_mut`].
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.emb_w, &self.emb_b];
        out.extend([&self.enc.wx, &self.enc.wh, &self.enc.b]);
        out.extend([&self.dec.wx, &self.dec.wh, &self.dec.b]);
        if self.config.self_attention {
            out.push(&self.attn_q);
            out.push(&self.attn_k);
            out.push(&self.attn_v);
        }
        out.push(&self.ptr_w1);
        out.push(&self.ptr_w2);
        out.push(&self.ptr_v);
        out.push(&self.end_emb);
        if self.config.start_token == StartToken::Learned {
            out.push(&self.start_emb);
        }
        out
    }

    /// Live parameters in a fixed order; the optimizer, gradient checking,
    /// and checkpoints all rely on this order being stable.
    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.emb_w, &mut self.emb_b];
        out.extend(self.enc.params_mut());
        out.extend(self.dec.params_mut());
        if self.config.self_attention {
            out.push(&mut self.attn_q);
            out.push(&mut self.attn_k);
            out.push(&mut self.attn_v);
        }
        out.push(&mut self.ptr_w1);
        out.push(&mut self.ptr_w2);
        out.push(&mut self.ptr_v);
        out.push(&mut self.end_emb);
        if self.config.start_token == StartToken::Learned {
            out.push(&mut self.start_emb);
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Embeds a 2-D point through the shared input embedding.
    pub(crate) fn embed_point(&self, x: f64, y: f64) -> Vec<f64> {
        let h = self.config.hidden;
        let mut out = self.emb_b.value.data().to_vec();
        let w = self.emb_w.value.data();
        for k in 0..h {
            out[k] += x * w[k] + y * w[h + k];
        }
        out
    }

    /// First decoder input: zero vector or the learned start token.
    pub(crate) fn start_input(&self) -> Vec<f64> {
        match self.config.start_token {
            StartToken::Zero => vec![0.0; self.config.hidden],
            StartToken::Learned => self.start_emb.value.data().to_vec(),
        }
    }
}

#[derive(Debug)]
pub enum ModelError {
    ConfigInvalid(String),
    /// A label token was masked out during teacher forcing; the oracle and
    /// the masking rules disagree, which is a bug, not a data condition.
    LabelMasked { step: usize, token: usize },
    CheckpointMismatch(String),
    Nn(NnError),
    Io(std::io::Error),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::ConfigInvalid(why) => write!(f, "invalid config: {why}"),
            ModelError::LabelMasked { step, token } => {
                write!(f, "label token {token} at step {step} was masked out")
            }
            ModelError::CheckpointMismatch(why) => write!(f, "checkpoint mismatch: {why}"),
            ModelError::Nn(e) => write!(f, "{e}"),
            ModelError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<NnError> for ModelError {
    fn from(e: NnError) -> Self {
        ModelError::Nn(e)
    }
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e)
    }
}
