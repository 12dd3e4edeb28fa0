//! Flat `key=value` experiment configuration.
//!
//! One or more whitespace-separated `key=value` pairs per line; `#` starts a
//! comment. Unknown keys are rejected. See the README for the key table.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{make_scheme, PartitionScheme, SchemeKind};
use crate::diagnostics::DEFAULT_CLOUD_SIZE;
use crate::dp::DpConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::federation::{ModelConfig, RoundConfig};
use crate::losses::LossWeights;
use crate::models::{DiscriminatorConfig, GeneratorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Central,
    CentralDp,
    Fed,
    FedDp,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Central, Mode::CentralDp, Mode::Fed, Mode::FedDp];

    pub fn is_federated(self) -> bool {
        matches!(self, Mode::Fed | Mode::FedDp)
    }

    pub fn uses_dp(self) -> bool {
        matches!(self, Mode::CentralDp | Mode::FedDp)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Central => "central",
            Mode::CentralDp => "central_dp",
            Mode::Fed => "fed",
            Mode::FedDp => "fed_dp",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("expected one of central, central_dp, fed, fed_dp, got `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    /// `seed: None` follows the experiment seed.
    Synthetic {
        n: usize,
        image_size: usize,
        seed: Option<u64>,
    },
    ImageDir {
        path: PathBuf,
        image_size: usize,
    },
}

impl DatasetSource {
    pub fn image_size(&self) -> usize {
        match self {
            DatasetSource::Synthetic { image_size, .. }
            | DatasetSource::ImageDir { image_size, .. } => *image_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dataset: DatasetSource,
    pub scheme: PartitionScheme,
    pub paired_ratio: f64,
    pub test_fraction: f64,
    pub round: RoundConfig,
    /// Centralized epochs; defaults to `rounds × local_epochs`.
    pub central_epochs: usize,
    pub models: ModelConfig,
    pub latent_samples: usize,
    pub output_dir: PathBuf,
    pub global_seed: u64,
    pub execution: Execution,
    pub checkpoints: bool,
    /// Client scheduling order within a round (results do not depend on it).
    pub client_order: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn data_seed(&self) -> u64 {
        match self.dataset {
            DatasetSource::Synthetic { seed: Some(s), .. } => s,
            _ => self.global_seed,
        }
    }

    /// Training round config for this mode: DP switched by the mode.
    pub fn effective_round(&self) -> RoundConfig {
        let mut r = self.round.clone();
        r.dp.enabled = self.mode.uses_dp();
        r
    }
}

pub const KEYS: &[&str] = &[
    "mode",
    "dataset",
    "n_samples",
    "image_size",
    "data_seed",
    "image_dir",
    "scheme",
    "n_clients",
    "proportions",
    "paired_ratio",
    "test_fraction",
    "rounds",
    "local_epochs",
    "epochs",
    "batch_size",
    "lr_g",
    "lr_d",
    "momentum_d",
    "dp_clip",
    "dp_sigma",
    "lambda_cycle",
    "lambda_paired",
    "gen_channels",
    "disc_channels",
    "latent_tap",
    "latent_samples",
    "output_dir",
    "seed",
    "execution",
    "checkpoints",
    "client_order",
];

/// Raw pairs in document order; later duplicates override earlier ones.
fn tokenize(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split_whitespace() {
            let Some((k, v)) = token.split_once('=') else {
                return Err(Error::config(
                    token,
                    format!("line {}: expected key=value", lineno + 1),
                ));
            };
            if !KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            pairs.push((k.to_string(), v.to_string()));
        }
    }
    Ok(pairs)
}

struct Raw(Vec<(String, String)>);

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse()
                            .map_err(|e| Error::config(key, format!("cannot parse `{x}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn positive(key: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(Error::config(key, "must be positive"));
    }
    Ok(v)
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::config(
            key,
            format!("must be finite and >= 0, got {v}"),
        ));
    }
    Ok(v)
}

/// Parses and validates a configuration document, applying defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw = Raw(tokenize(text)?);

    let mode: Mode = raw.parse("mode", Mode::FedDp)?;
    let seed: u64 = raw.parse("seed", 1)?;
    let image_size = positive("image_size", raw.parse("image_size", 32)?)?;
    let dataset = match raw.get("dataset").unwrap_or("synthetic") {
        "synthetic" => DatasetSource::Synthetic {
            n: positive("n_samples", raw.parse("n_samples", 6000)?)?,
            image_size,
            seed: raw
                .get("data_seed")
                .map(|_| raw.parse("data_seed", 0))
                .transpose()?,
        },
        "image_dir" => DatasetSource::ImageDir {
            path: raw
                .get("image_dir")
                .map(PathBuf::from)
                .ok_or_else(|| Error::config("image_dir", "required when dataset=image_dir"))?,
            image_size,
        },
        other => {
            return Err(Error::config(
                "dataset",
                format!("expected synthetic or image_dir, got `{other}`"),
            ))
        }
    };

    let kind: SchemeKind = raw.parse("scheme", SchemeKind::Gradual)?;
    let proportions: Option<Vec<f64>> = raw.list("proportions")?;
    let scheme = match (kind, proportions) {
        (_, Some(p)) => {
            PartitionScheme::explicit(p).map_err(|e| Error::config("proportions", e.to_string()))?
        }
        (SchemeKind::Explicit, None) => {
            return Err(Error::config(
                "proportions",
                "required when scheme=explicit",
            ))
        }
        (kind, None) => {
            let n = positive("n_clients", raw.parse("n_clients", 4)?)?;
            make_scheme(kind, n).map_err(|e| Error::config("n_clients", e.to_string()))?
        }
    };
    if let (Some(n), Some(_)) = (raw.get("n_clients"), raw.get("proportions")) {
        if n.parse::<usize>().ok() != Some(scheme.n_clients()) {
            return Err(Error::config(
                "n_clients",
                format!("{n} disagrees with {} proportions", scheme.n_clients()),
            ));
        }
    }

    let paired_ratio: f64 = raw.parse("paired_ratio", 0.5)?;
    if !(0.0..=1.0).contains(&paired_ratio) {
        return Err(Error::config(
            "paired_ratio",
            format!("must be in [0,1], got {paired_ratio}"),
        ));
    }
    let test_fraction: f64 = raw.parse("test_fraction", 0.2)?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(
            "test_fraction",
            format!("must be in (0,1), got {test_fraction}"),
        ));
    }

    let rounds = positive("rounds", raw.parse("rounds", 10)?)?;
    let local_epochs = positive("local_epochs", raw.parse("local_epochs", 3)?)?;
    let central_epochs = raw.parse("epochs", rounds * local_epochs)?;
    let momentum_d = non_negative("momentum_d", raw.parse("momentum_d", 0.5)?)?;
    if momentum_d >= 1.0 {
        return Err(Error::config("momentum_d", "must be < 1"));
    }
    let dp_clip: f64 = raw.parse("dp_clip", 1.0)?;
    if !(dp_clip > 0.0) {
        return Err(Error::config(
            "dp_clip",
            format!("must be > 0, got {dp_clip}"),
        ));
    }
    let round = RoundConfig {
        local_epochs,
        rounds,
        batch_size: positive("batch_size", raw.parse("batch_size", 4)?)?,
        lr_g: non_negative("lr_g", raw.parse("lr_g", 0.002)?)?,
        lr_d: non_negative("lr_d", raw.parse("lr_d", 0.01)?)?,
        momentum_d,
        dp: DpConfig {
            clip_bound: dp_clip,
            noise_multiplier: non_negative("dp_sigma", raw.parse("dp_sigma", 1.0)?)?,
            enabled: mode.uses_dp(),
        },
        loss_weights: LossWeights {
            lambda_cycle: non_negative("lambda_cycle", raw.parse("lambda_cycle", 10.0)?)?,
            lambda_paired: non_negative("lambda_paired", raw.parse("lambda_paired", 5.0)?)?,
        },
    };

    let generator = GeneratorConfig {
        image_size,
        channels: raw
            .list("gen_channels")?
            .unwrap_or_else(|| vec![16, 32, 64]),
        latent_tap_index: raw.parse("latent_tap", 5)?,
    };
    generator
        .validate()
        .map_err(|e| Error::config("gen_channels", e.to_string()))?;
    let discriminator = DiscriminatorConfig {
        image_size,
        channels: raw.list("disc_channels")?.unwrap_or_else(|| vec![16, 32]),
    };
    discriminator
        .validate()
        .map_err(|e| Error::config("disc_channels", e.to_string()))?;

    let execution = match raw.get("execution").unwrap_or("parallel") {
        "parallel" => Execution::Parallel,
        "serial" => Execution::Serial,
        other => {
            return Err(Error::config(
                "execution",
                format!("expected parallel or serial, got `{other}`"),
            ))
        }
    };

    let client_order: Option<Vec<usize>> = raw.list("client_order")?;
    if let Some(order) = &client_order {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..scheme.n_clients()).collect::<Vec<_>>() {
            return Err(Error::config(
                "client_order",
                format!("must be a permutation of 0..{}", scheme.n_clients()),
            ));
        }
    }

    Ok(ExperimentConfig {
        mode,
        dataset,
        scheme,
        paired_ratio,
        test_fraction,
        round,
        central_epochs,
        models: ModelConfig {
            generator,
            discriminator,
        },
        latent_samples: positive(
            "latent_samples",
            raw.parse("latent_samples", DEFAULT_CLOUD_SIZE)?,
        )?,
        output_dir: PathBuf::from(raw.get("output_dir").unwrap_or("out")),
        global_seed: seed,
        execution,
        checkpoints: raw.parse("checkpoints", true)?,
        client_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(err: Error) -> String {
        match err {
            Error::Config { key, .. } => key,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.mode, Mode::FedDp);
        assert_eq!(cfg.round.rounds, 10);
        assert_eq!(cfg.round.local_epochs, 3);
        assert_eq!(cfg.central_epochs, 30);
        assert_eq!(cfg.paired_ratio, 0.5);
        assert_eq!(cfg.scheme.proportions(), &[0.4, 0.3, 0.2, 0.1]);
        assert!(cfg.round.dp.enabled);
        assert_eq!(cfg.round.loss_weights, LossWeights::default());
        assert_eq!(
            cfg.dataset,
            DatasetSource::Synthetic {
                n: 6000,
                image_size: 32,
                seed: None
            }
        );
    }

    #[test]
    fn central_mode_with_epochs() {
        let cfg = parse_config("mode=central epochs=30").unwrap();
        assert_eq!(cfg.mode, Mode::Central);
        assert_eq!(cfg.central_epochs, 30);
        assert!(!cfg.effective_round().dp.enabled);
    }

    #[test]
    fn rejects_out_of_range_ratio() {
        assert_eq!(
            key_of(parse_config("paired_ratio=1.5").unwrap_err()),
            "paired_ratio"
        );
    }

    #[test]
    fn rejects_unknown_key_and_bad_types() {
        assert_eq!(key_of(parse_config("colour=blue").unwrap_err()), "colour");
        assert_eq!(key_of(parse_config("rounds=ten").unwrap_err()), "rounds");
        assert_eq!(key_of(parse_config("mode=hybrid").unwrap_err()), "mode");
        assert_eq!(key_of(parse_config("rounds=0").unwrap_err()), "rounds");
        assert_eq!(key_of(parse_config("dp_clip=0").unwrap_err()), "dp_clip");
        assert_eq!(
            key_of(parse_config("just_a_word").unwrap_err()),
            "just_a_word"
        );
    }

    #[test]
    fn comments_and_multiline() {
        let cfg = parse_config(
            "# experiment\nmode=fed  n_clients=2 # two hospitals\n\nscheme=extreme\nseed=9\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Fed);
        assert_eq!(cfg.scheme.proportions(), &[0.9, 0.1]);
        assert_eq!(cfg.global_seed, 9);
    }

    #[test]
    fn scheme_validation() {
        assert_eq!(
            key_of(parse_config("scheme=gradual n_clients=3").unwrap_err()),
            "n_clients"
        );
        assert_eq!(
            key_of(parse_config("scheme=explicit").unwrap_err()),
            "proportions"
        );
        assert_eq!(
            key_of(parse_config("scheme=explicit proportions=0.5,0.6").unwrap_err()),
            "proportions"
        );
        let cfg = parse_config("scheme=explicit proportions=0.5,0.25,0.25").unwrap();
        assert_eq!(cfg.scheme.n_clients(), 3);
        assert_eq!(
            key_of(parse_config("n_clients=2 proportions=0.5,0.25,0.25").unwrap_err()),
            "n_clients"
        );
    }

    #[test]
    fn client_order_must_be_permutation() {
        assert!(parse_config("n_clients=2 client_order=1,0").is_ok());
        assert_eq!(
            key_of(parse_config("n_clients=2 client_order=1,1").unwrap_err()),
            "client_order"
        );
    }

    #[test]
    fn image_dir_requires_path() {
        assert_eq!(
            key_of(parse_config("dataset=image_dir").unwrap_err()),
            "image_dir"
        );
        let cfg = parse_config("dataset=image_dir image_dir=/data/slices image_size=64").unwrap();
        assert_eq!(
            cfg.dataset,
            DatasetSource::ImageDir {
                path: "/data/slices".into(),
                image_size: 64
            }
        );
    }
}
