use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::{Group, ParamId, ParamStore};
use super::tape::{ConvGeom, Tape, Var};
use crate::error::{Error, Result};
use crate::seeding::{self, stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Side length of the square input frames.
    pub input_size: usize,
    /// Output channels of each stride-2 conv block.
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub head_hidden: usize,
    pub lstm_dropout: f64,
    pub head_dropout: f64,
    /// Frames per sequence (2 or 4).
    pub frames: usize,
    /// Multiplier applied to difference-image intensities before the encoder.
    pub input_scale: f64,
    /// Prediction = offset + scale · head output.
    pub output_offset: f64,
    pub output_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 64,
            channels: vec![8, 16, 32, 64],
            hidden: 64,
            lstm_layers: 3,
            head_hidden: 32,
            lstm_dropout: 0.1,
            head_dropout: 0.2,
            frames: 2,
            input_scale: 1.0 / 32.0,
            output_offset: 57.5,
            output_scale: 20.0,
        }
    }
}

impl ModelConfig {
    /// The reduced network used for finite-difference checks.
    pub fn tiny() -> Self {
        ModelConfig {
            input_size: 16,
            channels: vec![4, 8],
            hidden: 8,
            lstm_layers: 3,
            head_hidden: 4,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config("conv channels must be non-empty and positive".into()));
        }
        if self.input_size >> self.channels.len() == 0 {
            return Err(Error::Config(format!(
                "input size {} too small for {} stride-2 blocks",
                self.input_size,
                self.channels.len()
            )));
        }
        if self.hidden == 0 || self.lstm_layers == 0 || self.head_hidden == 0 {
            return Err(Error::Config("hidden sizes and layer count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.lstm_dropout) || !(0.0..1.0).contains(&self.head_dropout) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if self.frames != 2 && self.frames != 4 {
            return Err(Error::Config(format!("frames must be 2 or 4, got {}", self.frames)));
        }
        if !(self.input_scale > 0.0 && self.output_scale > 0.0) {
            return Err(Error::Config("scales must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.input_size * self.input_size
    }

    pub fn sample_len(&self) -> usize {
        self.frames * self.frame_len()
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvIds {
    w: ParamId,
    b: ParamId,
    geom: ConvGeom,
}

#[derive(Debug, Clone, Copy)]
struct LstmIds {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
    input: usize,
}

/// Whether dropout is active. Training carries the RNG for the masks.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut Rng),
}

/// Conv encoder, stacked LSTM and a two-layer regression head.
#[derive(Debug, Clone)]
pub struct HardnessModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    convs: Vec<ConvIds>,
    lstm: Vec<LstmIds>,
    fc1: (ParamId, ParamId),
    fc2: (ParamId, ParamId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub params: ParamStore,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl HardnessModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeding::rng(seed, &[stream::INIT]);
        let mut params = ParamStore::default();
        let normal = |rng: &mut Rng, n: usize, std: f64| -> Vec<f64> {
            (0..n).map(|_| std * Distribution::<f64>::sample(&StandardNormal, rng)).collect::<Vec<f64>>()
        };

        let mut convs = Vec::new();
        let (mut c, mut side) = (1, config.input_size);
        for (i, &out_c) in config.channels.iter().enumerate() {
            let geom = ConvGeom { n: config.frames, c, h: side, w: side, out_c, k: 3, stride: 2, pad: 1 };
            let fan_in = c * 9;
            let w = params.add(
                format!("conv{i}.weight"),
                vec![out_c, c, 3, 3],
                Group::Early,
                true,
                normal(&mut rng, out_c * fan_in, (2.0 / fan_in as f64).sqrt()),
            );
            let b = params.add(format!("conv{i}.bias"), vec![out_c], Group::Early, false, vec![0.0; out_c]);
            convs.push(ConvIds { w, b, geom });
            c = out_c;
            side = geom.out_h();
        }

        let h = config.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        let uniform = |rng: &mut Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..bound)).collect() };
        let mut lstm = Vec::new();
        let mut input = c;
        for l in 0..config.lstm_layers {
            let w_ih = params.add(format!("lstm{l}.w_ih"), vec![4 * h, input], Group::Late, true, uniform(&mut rng, 4 * h * input));
            let w_hh = params.add(format!("lstm{l}.w_hh"), vec![4 * h, h], Group::Late, true, uniform(&mut rng, 4 * h * h));
            let mut bias = uniform(&mut rng, 4 * h);
            bias[h..2 * h].fill(1.0);
            let b = params.add(format!("lstm{l}.bias"), vec![4 * h], Group::Late, false, bias);
            lstm.push(LstmIds { w_ih, w_hh, b, input });
            input = h;
        }

        let hh = config.head_hidden;
        let fc1 = (
            params.add("head.fc1.weight", vec![hh, h], Group::Late, true, normal(&mut rng, hh * h, (2.0 / h as f64).sqrt())),
            params.add("head.fc1.bias", vec![hh], Group::Late, false, vec![0.0; hh]),
        );
        let fc2 = (
            params.add("head.fc2.weight", vec![1, hh], Group::Late, true, normal(&mut rng, hh, (1.0 / hh as f64).sqrt())),
            params.add("head.fc2.bias", vec![1], Group::Late, false, vec![0.0]),
        );
        Ok(HardnessModel { config, params, convs, lstm, fc1, fc2 })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { version: CHECKPOINT_VERSION, config: self.config.clone(), params: self.params.clone() }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        let mut model = HardnessModel::new(ck.config.clone(), 0)?;
        model.params.load_from(&ck.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &self.checkpoint())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ck: Checkpoint = serde_json::from_reader(file)?;
        HardnessModel::from_checkpoint(&ck)
    }

    fn dropout(tape: &mut Tape, x: Var, rate: f64, mode: &mut Mode) -> Result<Var> {
        match mode {
            Mode::Train(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let mask = (0..tape.len(x)?).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
                tape.dropout(x, mask)
            }
            _ => Ok(x),
        }
    }

    /// Records one sequence (`frames` difference images, row-major, already
    /// scaled) on `tape` and returns the scalar prediction.
    pub fn forward(&self, tape: &mut Tape, input: &[f64], mode: &mut Mode) -> Result<Var> {
        let cfg = &self.config;
        if input.len() != cfg.sample_len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} frames of {}x{} ({} values), got {}",
                cfg.frames,
                cfg.input_size,
                cfg.input_size,
                cfg.sample_len(),
                input.len()
            )));
        }
        let mut x = tape.input(input.to_vec());
        let mut last = cfg.frame_len();
        for conv in &self.convs {
            let (w, b) = (tape.param(conv.w), tape.param(conv.b));
            x = tape.conv2d(x, w, b, conv.geom)?;
            x = tape.relu(x)?;
            last = conv.geom.out_h() * conv.geom.out_w();
        }
        let feat = *cfg.channels.last().unwrap();
        let pooled = tape.global_avg_pool(x, feat, last)?;
        let mut seq: Vec<Var> = (0..cfg.frames).map(|t| tape.slice(pooled, t * feat, feat)).collect::<Result<_>>()?;

        let h = cfg.hidden;
        for (l, ids) in self.lstm.iter().enumerate() {
            let (w_ih, w_hh, b) = (tape.param(ids.w_ih), tape.param(ids.w_hh), tape.param(ids.b));
            let mut state: Option<(Var, Var)> = None;
            let mut out = Vec::with_capacity(seq.len());
            for &xt in &seq {
                let mut z = tape.matvec(w_ih, xt, 4 * h, ids.input)?;
                if let Some((hp, _)) = state {
                    let r = tape.matvec(w_hh, hp, 4 * h, h)?;
                    z = tape.add(z, r)?;
                }
                z = tape.add(z, b)?;
                let zi = tape.slice(z, 0, h)?;
                let zf = tape.slice(z, h, h)?;
                let zg = tape.slice(z, 2 * h, h)?;
                let zo = tape.slice(z, 3 * h, h)?;
                let i = tape.sigmoid(zi)?;
                let g = tape.tanh(zg)?;
                let o = tape.sigmoid(zo)?;
                let mut c = tape.mul(i, g)?;
                if let Some((_, cp)) = state {
                    let f = tape.sigmoid(zf)?;
                    let keep = tape.mul(f, cp)?;
                    c = tape.add(keep, c)?;
                }
                let tc = tape.tanh(c)?;
                let ht = tape.mul(o, tc)?;
                state = Some((ht, c));
                out.push(ht);
            }
            if l + 1 < self.lstm.len() {
                for v in &mut out {
                    *v = Self::dropout(tape, *v, cfg.lstm_dropout, mode)?;
                }
            }
            seq = out;
        }

        let last_h = *seq.last().unwrap();
        let (w1, b1) = (tape.param(self.fc1.0), tape.param(self.fc1.1));
        let mut y = tape.matvec(w1, last_h, cfg.head_hidden, h)?;
        y = tape.add(y, b1)?;
        y = tape.relu(y)?;
        y = Self::dropout(tape, y, cfg.head_dropout, mode)?;
        let (w2, b2) = (tape.param(self.fc2.0), tape.param(self.fc2.1));
        y = tape.matvec(w2, y, 1, cfg.head_hidden)?;
        y = tape.add(y, b2)?;
        tape.affine(y, cfg.output_scale, cfg.output_offset)
    }

    /// Evaluation-mode prediction for one prepared sequence.
    pub fn predict_one(&self, input: &[f64]) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let y = self.forward(&mut tape, input, &mut Mode::Eval)?;
        Ok(tape.value(y)?[0])
    }
}
