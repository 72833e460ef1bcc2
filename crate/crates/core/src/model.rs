//! Stress-progression classifiers.
//!
//! Both variants take two aligned sequences of equal length: speech feature
//! vectors for the most recent windows, and a stress context that starts
//! with the all-zero code followed by the labels of the preceding windows.
//! Each sequence gets its own encoder; speech states query the context
//! states through cross-attention and the final position is classified into
//! three independent VAD probabilities.
//!
//! * Recurrent: two parallel LSTMs, and the classifier sees the fused final
//!   speech state concatenated with the final context state.
//! * Transformer: pre-norm encoders on both sides; the classifier sees the
//!   fused final speech state.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    add_seq, sigmoid, Attention, AttentionCache, Linear, Lstm, LstmCache, ParamSet, TransformerCache,
    TransformerEncoder,
};
use crate::vad::{is_stress, VadCode, DEFAULT_CONTEXT};

pub const CODE_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    #[serde(rename = "lstm")]
    Recurrent,
    Transformer,
}

impl Architecture {
    pub fn tag(self) -> u32 {
        match self {
            Architecture::Recurrent => 0,
            Architecture::Transformer => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Architecture::Recurrent),
            1 => Ok(Architecture::Transformer),
            t => Err(Error::format("checkpoint", format!("unknown architecture tag {t}"))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Recurrent => "lstm",
            Architecture::Transformer => "transformer",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" | "recurrent" => Ok(Architecture::Recurrent),
            "transformer" => Ok(Architecture::Transformer),
            other => Err(Error::InvalidConfig(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub input_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    pub context_layers: usize,
    pub dropout: f64,
    pub positional: bool,
    /// Windows of history `n`; sequences are `max(n, 1)` long.
    pub context_len: usize,
}

impl ModelConfig {
    pub fn new(arch: Architecture, input_dim: usize, context_len: usize) -> Self {
        ModelConfig {
            arch,
            input_dim,
            hidden: 128,
            heads: 4,
            ffn: 256,
            layers: 2,
            context_layers: 1,
            dropout: 0.3,
            positional: true,
            context_len,
        }
    }

    /// Number of windows fed to the model per prediction.
    pub fn sequence_len(&self) -> usize {
        self.context_len.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("zero-sized model".into()));
        }
        if self.arch == Architecture::Transformer && (self.heads == 0 || self.hidden % self.heads != 0) {
            return Err(Error::InvalidConfig(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Stress context: the alignment code followed by the preceding labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSequence {
    codes: Vec<VadCode>,
}

impl ContextSequence {
    /// Build from the labels of the windows before the current one.
    pub fn from_previous(previous: &[VadCode]) -> Self {
        let mut codes = Vec::with_capacity(previous.len() + 1);
        codes.push(DEFAULT_CONTEXT);
        codes.extend_from_slice(previous);
        ContextSequence { codes }
    }

    pub fn new(codes: Vec<VadCode>) -> Result<Self> {
        match codes.first() {
            Some(&c) if c == DEFAULT_CONTEXT => Ok(ContextSequence { codes }),
            Some(_) => Err(Error::InvalidCode("context must start with 0,0,0".into())),
            None => Err(Error::EmptyInput("context sequence")),
        }
    }

    pub fn codes(&self) -> &[VadCode] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    fn as_rows(&self) -> Vec<Vec<f64>> {
        self.codes.iter().map(|c| c.as_f64().to_vec()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probs: [f64; 3],
    pub code: VadCode,
    pub stress: bool,
}

impl Prediction {
    pub fn from_probs(probs: [f64; 3]) -> Self {
        let code = VadCode::from_probs(probs);
        Prediction {
            probs,
            code,
            stress: is_stress(code),
        }
    }

    pub fn from_logits(logits: [f64; 3]) -> Self {
        Prediction::from_probs(logits.map(sigmoid))
    }
}

#[derive(Debug, Clone)]
enum Encoders {
    Recurrent { speech: Lstm, context: Lstm },
    Transformer {
        speech: TransformerEncoder,
        context: TransformerEncoder,
    },
}

#[derive(Debug, Clone)]
struct Layout {
    encoders: Encoders,
    cross: Attention,
    head: Linear,
}

impl Layout {
    fn build(cfg: &ModelConfig, ps: &mut ParamSet) -> Self {
        let h = cfg.hidden;
        let (encoders, head_in) = match cfg.arch {
            Architecture::Recurrent => (
                Encoders::Recurrent {
                    speech: Lstm::register(ps, "speech_lstm", cfg.input_dim, h),
                    context: Lstm::register(ps, "context_lstm", CODE_DIM, h),
                },
                2 * h,
            ),
            Architecture::Transformer => (
                Encoders::Transformer {
                    speech: TransformerEncoder::register(
                        ps,
                        "speech_encoder",
                        cfg.input_dim,
                        h,
                        cfg.layers,
                        cfg.heads,
                        cfg.ffn,
                        cfg.positional,
                    ),
                    context: TransformerEncoder::register(
                        ps,
                        "context_encoder",
                        CODE_DIM,
                        h,
                        cfg.context_layers,
                        cfg.heads,
                        cfg.ffn,
                        cfg.positional,
                    ),
                },
                h,
            ),
        };
        Layout {
            encoders,
            cross: Attention::register(ps, "cross_attention", h, 1, false),
            head: Linear::register(ps, "classifier", head_in, CODE_DIM),
        }
    }

    fn init<R: Rng>(&self, ps: &mut ParamSet, rng: &mut R) {
        match &self.encoders {
            Encoders::Recurrent { speech, context } => {
                speech.init(ps, rng);
                context.init(ps, rng);
            }
            Encoders::Transformer { speech, context } => {
                speech.init(ps, rng);
                context.init(ps, rng);
            }
        }
        self.cross.init(ps, rng);
        self.head.init(ps, rng);
    }
}

/// Inverted-dropout masks on the two encoder outputs; entries are 0 or `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub speech: Vec<Vec<f64>>,
    pub context: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(rng: &mut R, len: usize, hidden: usize, p: f64) -> Self {
        let keep = 1.0 / (1.0 - p);
        let draw = |rng: &mut R| -> Vec<Vec<f64>> {
            (0..len)
                .map(|_| {
                    (0..hidden)
                        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                        .collect()
                })
                .collect()
        };
        let speech = draw(rng);
        let context = draw(rng);
        DropoutMasks { speech, context }
    }
}

#[derive(Debug, Clone)]
enum EncoderCache {
    Lstm(LstmCache),
    Transformer(TransformerCache),
}

/// Intermediate values from a forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    speech: EncoderCache,
    context: EncoderCache,
    context_states: Vec<Vec<f64>>,
    masks: Option<DropoutMasks>,
    cross: AttentionCache,
    features: Vec<f64>,
    pub logits: [f64; 3],
}

impl ForwardCache {
    /// Cross-attention weights `[query][context position]`.
    pub fn attention_weights(&self) -> &[Vec<f64>] {
        &self.cross.weights[0]
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
    layout: Layout,
}

fn apply_mask(states: &mut [Vec<f64>], mask: Option<&Vec<Vec<f64>>>) {
    if let Some(mask) = mask {
        for (row, m) in states.iter_mut().zip(mask) {
            for (v, k) in row.iter_mut().zip(m) {
                *v *= k;
            }
        }
    }
}

impl Model {
    /// Randomly initialised model; weights uniform in `+-1/sqrt(fan_in)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Model::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.layout.init(&mut model.params, &mut rng);
        Ok(model)
    }

    /// Model with every parameter set to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::default();
        let layout = Layout::build(&config, &mut params);
        Ok(Model {
            config,
            params,
            layout,
        })
    }

    /// Rebuild from stored tensors; names and shapes must match the layout.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut model = Model::zeros(config)?;
        if params.tensors.len() != model.params.tensors.len() {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "{} tensors, layout expects {}",
                    params.tensors.len(),
                    model.params.tensors.len()
                ),
            ));
        }
        for (want, got) in model.params.tensors.iter().zip(&params.tensors) {
            if want.name != got.name || want.shape != got.shape {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor {} {:?} does not match {} {:?}", got.name, got.shape, want.name, want.shape),
                ));
            }
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_speech(&self, xs: &[Vec<f64>]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("speech sequence"));
        }
        if let Some(bad) = xs.iter().find(|x| x.len() != self.config.input_dim) {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: bad.len(),
            });
        }
        Ok(())
    }

    fn run_speech(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, EncoderCache) {
        match &self.layout.encoders {
            Encoders::Recurrent { speech, .. } => {
                let (hs, c) = speech.forward(&self.params, xs);
                (hs, EncoderCache::Lstm(c))
            }
            Encoders::Transformer { speech, .. } => {
                let (hs, c) = speech.forward(&self.params, xs);
                (hs, EncoderCache::Transformer(c))
            }
        }
    }

    fn run_context(&self, rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, EncoderCache) {
        match &self.layout.encoders {
            Encoders::Recurrent { context, .. } => {
                let (hs, c) = context.forward(&self.params, rows);
                (hs, EncoderCache::Lstm(c))
            }
            Encoders::Transformer { context, .. } => {
                let (hs, c) = context.forward(&self.params, rows);
                (hs, EncoderCache::Transformer(c))
            }
        }
    }

    /// Speech encoder states, one per input step.
    pub fn encode_speech(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_speech(xs)?;
        Ok(self.run_speech(xs).0)
    }

    pub fn encode_context(&self, context: &ContextSequence) -> Result<Vec<Vec<f64>>> {
        if context.is_empty() {
            return Err(Error::EmptyInput("context sequence"));
        }
        Ok(self.run_context(&context.as_rows()).0)
    }

    /// Fuse primary states with context states: `primary + attend(primary -> context)`.
    /// Also returns the attention weights `[query][key]`.
    pub fn cross_attention(
        &self,
        primary: &[Vec<f64>],
        context: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if primary.is_empty() || context.is_empty() {
            return Err(Error::EmptyInput("cross-attention inputs"));
        }
        let h = self.config.hidden;
        if let Some(bad) = primary.iter().chain(context).find(|v| v.len() != h) {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: bad.len(),
            });
        }
        let (attended, cache) = self.layout.cross.forward(&self.params, primary, context);
        let mut fused = primary.to_vec();
        add_seq(&mut fused, &attended);
        Ok((fused, cache.weights[0].clone()))
    }

    /// Forward pass retaining intermediates; `masks` enables dropout.
    pub fn forward_with_cache(
        &self,
        xs: &[Vec<f64>],
        context: &ContextSequence,
        masks: Option<&DropoutMasks>,
    ) -> Result<ForwardCache> {
        self.check_speech(xs)?;
        if xs.len() != context.len() {
            return Err(Error::LengthMismatch(format!(
                "{} speech windows but {} context codes",
                xs.len(),
                context.len()
            )));
        }
        let (mut speech_states, speech) = self.run_speech(xs);
        let (mut context_states, context_cache) = self.run_context(&context.as_rows());
        apply_mask(&mut speech_states, masks.map(|m| &m.speech));
        apply_mask(&mut context_states, masks.map(|m| &m.context));

        let (attended, cross) = self.layout.cross.forward(&self.params, &speech_states, &context_states);
        let last = xs.len() - 1;
        let mut features: Vec<f64> = speech_states[last]
            .iter()
            .zip(&attended[last])
            .map(|(a, b)| a + b)
            .collect();
        if self.config.arch == Architecture::Recurrent {
            features.extend_from_slice(&context_states[last]);
        }
        let out = self.layout.head.forward(&self.params, &features);
        let logits = [out[0], out[1], out[2]];
        Ok(ForwardCache {
            speech,
            context: context_cache,
            context_states,
            masks: masks.cloned(),
            cross,
            features,
            logits,
        })
    }

    pub fn forward(&self, xs: &[Vec<f64>], context: &ContextSequence) -> Result<Prediction> {
        Ok(Prediction::from_logits(self.forward_with_cache(xs, context, None)?.logits))
    }

    /// Accumulate `dL/dparams` into `grads` given `dL/dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: [f64; 3], grads: &mut ParamSet) {
        let ps = &self.params;
        let h = self.config.hidden;
        let steps = cache.context_states.len();
        let dfeatures = self.layout.head.backward(ps, grads, &cache.features, &dlogits);

        let mut dfused = vec![vec![0.0; h]; steps];
        dfused[steps - 1].copy_from_slice(&dfeatures[..h]);
        let (dq, mut dcontext) = self.layout.cross.backward(ps, grads, &cache.cross, &dfused);
        let mut dspeech = dfused;
        add_seq(&mut dspeech, &dq);
        if self.config.arch == Architecture::Recurrent {
            for (d, g) in dcontext[steps - 1].iter_mut().zip(&dfeatures[h..]) {
                *d += g;
            }
        }
        apply_mask(&mut dspeech, cache.masks.as_ref().map(|m| &m.speech));
        apply_mask(&mut dcontext, cache.masks.as_ref().map(|m| &m.context));

        match (&self.layout.encoders, &cache.speech, &cache.context) {
            (Encoders::Recurrent { speech, context }, EncoderCache::Lstm(sc), EncoderCache::Lstm(cc)) => {
                speech.backward(ps, grads, sc, &dspeech);
                context.backward(ps, grads, cc, &dcontext);
            }
            (
                Encoders::Transformer { speech, context },
                EncoderCache::Transformer(sc),
                EncoderCache::Transformer(cc),
            ) => {
                speech.backward(ps, grads, sc, &dspeech);
                context.backward(ps, grads, cc, &dcontext);
            }
            _ => unreachable!("cache produced by a different architecture"),
        }
    }
}
