use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EpochedDataset, SessionTag};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Synthetic motor-imagery data: 1/f background plus a mu rhythm that each class suppresses
/// on its own block of channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_subjects: i64,
    /// Per class and per session.
    pub trials_per_class: i64,
    #[serde(default = "defaults::classes")]
    pub classes: i64,
    pub channels: i64,
    pub samples: i64,
    pub fs: f64,
    #[serde(default = "defaults::sessions")]
    pub sessions: i64,
    #[serde(default = "defaults::mu_hz")]
    pub mu_hz: f64,
    #[serde(default = "defaults::mu_amplitude")]
    pub mu_amplitude: f64,
    /// Fraction of mu amplitude removed on the class's designated channels.
    #[serde(default = "defaults::contrast")]
    pub contrast: f64,
    /// Standard deviation of the 1/f background.
    #[serde(default = "defaults::noise")]
    pub noise: f64,
    /// Spread of per-subject channel gains and mu frequency.
    #[serde(default = "defaults::variability")]
    pub subject_variability: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn classes() -> i64 {
        2
    }
    pub fn sessions() -> i64 {
        2
    }
    pub fn mu_hz() -> f64 {
        10.0
    }
    pub fn mu_amplitude() -> f64 {
        2.0
    }
    pub fn contrast() -> f64 {
        0.8
    }
    pub fn noise() -> f64 {
        1.0
    }
    pub fn variability() -> f64 {
        0.1
    }
}

impl SynthSpec {
    pub fn new(n_subjects: usize, trials_per_class: usize, channels: usize, samples: usize, fs: f64) -> Self {
        SynthSpec {
            n_subjects: n_subjects as i64,
            trials_per_class: trials_per_class as i64,
            classes: defaults::classes(),
            channels: channels as i64,
            samples: samples as i64,
            fs,
            sessions: defaults::sessions(),
            mu_hz: defaults::mu_hz(),
            mu_amplitude: defaults::mu_amplitude(),
            contrast: defaults::contrast(),
            noise: defaults::noise(),
            subject_variability: defaults::variability(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |arg, reason: String| Err(Error::InvalidArg { arg, reason });
        for (arg, v) in [
            ("n_subjects", self.n_subjects),
            ("trials_per_class", self.trials_per_class),
            ("classes", self.classes),
            ("channels", self.channels),
            ("samples", self.samples),
            ("sessions", self.sessions),
        ] {
            if v <= 0 {
                return bad(arg, format!("{v} must be positive"));
            }
        }
        if self.sessions > 127 || self.n_subjects > u32::MAX as i64 {
            return bad("sessions", format!("{} sessions is more than the format holds", self.sessions));
        }
        if self.channels < self.classes {
            return bad("channels", format!("{} channels cannot give each of {} classes its own block", self.channels, self.classes));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad("fs", format!("{} is not a positive rate", self.fs));
        }
        if !(self.mu_hz > 0.0 && self.mu_hz * 1.5 < self.fs / 2.0) {
            return bad("mu_hz", format!("{} Hz does not fit below the Nyquist rate", self.mu_hz));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return bad("contrast", format!("{} is outside [0, 1]", self.contrast));
        }
        for (arg, v) in [
            ("noise", self.noise),
            ("mu_amplitude", self.mu_amplitude),
            ("subject_variability", self.subject_variability),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(arg, format!("{v} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Channels whose mu rhythm is suppressed in trials of `class`.
    pub fn designated_channels(&self, class: usize) -> std::ops::Range<usize> {
        let block = (self.channels as usize / (2 * self.classes as usize)).max(1);
        class * block..(class + 1) * block
    }

    fn session_tag(&self, s: usize) -> SessionTag {
        if self.sessions >= 2 && s == self.sessions as usize - 1 {
            SessionTag::online(s as u8)
        } else {
            SessionTag::offline(s as u8)
        }
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Bank of unit-variance first-order low-passes with corners four times apart; their sum has
/// a roughly 1/f spectrum.
struct PinkNoise {
    poles: Vec<f64>,
    state: Vec<f64>,
}

impl PinkNoise {
    fn new(fs: f64, rng: &mut impl Rng) -> Self {
        let mut poles = Vec::new();
        let mut fc = fs / 4.0;
        while fc > 0.2 {
            poles.push((-2.0 * PI * fc / fs).exp());
            fc /= 4.0;
        }
        let state = poles.iter().map(|_| normal(rng)).collect();
        PinkNoise { poles, state }
    }

    fn next(&mut self, rng: &mut impl Rng) -> f64 {
        let mut sum = 0.0;
        for (s, &r) in self.state.iter_mut().zip(&self.poles) {
            *s = r * *s + (1.0 - r * r).sqrt() * normal(rng);
            sum += *s;
        }
        sum / (self.poles.len() as f64).sqrt()
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<EpochedDataset> {
    spec.validate()?;
    let (c, t, n_cls) = (spec.channels as usize, spec.samples as usize, spec.classes as usize);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut subjects = Vec::new();
    let mut tags = Vec::new();
    for subj in 1..=spec.n_subjects as u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, subj as u64));
        let v = spec.subject_variability;
        let gains: Vec<f64> = (0..c).map(|_| (1.0 + v * normal(&mut rng)).max(0.2)).collect();
        let mu = spec.mu_hz * (1.0 + 0.5 * v * normal(&mut rng)).clamp(0.8, 1.2);
        for s in 0..spec.sessions as usize {
            let mut order: Vec<usize> = (0..n_cls).flat_map(|k| std::iter::repeat_n(k, spec.trials_per_class as usize)).collect();
            order.shuffle(&mut rng);
            for &k in &order {
                let designated = spec.designated_channels(k);
                for ch in 0..c {
                    let mut amp = spec.mu_amplitude * gains[ch] * (1.0 + 0.05 * normal(&mut rng));
                    if designated.contains(&ch) {
                        amp *= 1.0 - spec.contrast;
                    }
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let mut pink = PinkNoise::new(spec.fs, &mut rng);
                    data.extend((0..t).map(|i| {
                        let osc = amp * (2.0 * PI * mu * i as f64 / spec.fs + phase).sin();
                        (osc + spec.noise * pink.next(&mut rng)) as f32
                    }));
                }
                labels.push(k);
                subjects.push(subj);
                tags.push(spec.session_tag(s));
            }
        }
    }
    let class_names = match n_cls {
        2 => vec!["left".into(), "right".into()],
        3 => vec!["left".into(), "right".into(), "rest".into()],
        _ => Vec::new(),
    };
    EpochedDataset::new(data, c, t, labels, subjects, tags, spec.fs, Vec::new(), class_names)
}
