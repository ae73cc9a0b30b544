//! Run configuration: a flat `key = value` text format with presets.
//!
//! Lines are `key = value`; `#` starts a comment. A `preset` line selects
//! the base values, every other key overrides one field. Keys:
//!
//! | key            | meaning                                          |
//! |----------------|--------------------------------------------------|
//! | `preset`       | `paper-4.3` or `paper-4.4`                       |
//! | `samples`      | frames per TE feature (R)                        |
//! | `te_count`     | TE features per sequence (L)                     |
//! | `ref_dim`      | reference subspace dimension                     |
//! | `input_dim`    | input subspace dimension                         |
//! | `angles`       | canonical angles in the similarity (r)           |
//! | `top_k`        | references averaged per class (k)                |
//! | `group_size`   | sequences pooled per reference subspace (r_c)    |
//! | `normalize_te` | `true`/`false`, unit-normalize TE features       |
//! | `seed`         | TE sampling seed                                 |
//! | `seed_policy`  | `shared` or `per-sequence`                       |
//! | `view`         | `full` or `central` (what RTW samples from)      |
//! | `view_length`  | frames in a view                                 |
//! | `heads`        | self-attention heads                             |
//! | `d_k`, `d_v`   | query/key and value widths                       |
//! | `attn_seed`    | seed for random attention weights                |
//! | `data_dir`     | default data directory                           |
//! | `bank`         | default bank file                                |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::classifier::{BuildConfig, ClassifyParams, SeedPolicy};
use crate::error::{Result, RtwError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    /// RTW samples the whole sequence.
    Full,
    /// RTW only sees the central `view_length` frames.
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: String,
    pub samples: usize,
    pub te_count: usize,
    pub ref_dim: usize,
    pub input_dim: usize,
    pub angles: usize,
    pub top_k: usize,
    pub group_size: usize,
    pub normalize_te: bool,
    pub seed: u64,
    pub seed_policy: SeedPolicy,
    pub view: ViewMode,
    pub view_length: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub attn_seed: u64,
    pub data_dir: Option<String>,
    pub bank: Option<String>,
}

pub const PRESETS: [&str; 2] = ["paper-4.3", "paper-4.4"];

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset("paper-4.4").expect("built-in preset")
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = RunConfig {
            preset: name.to_owned(),
            samples: 16,
            te_count: 10,
            ref_dim: 10,
            input_dim: 10,
            angles: 10,
            top_k: 10,
            group_size: 1,
            normalize_te: false,
            seed: 0,
            seed_policy: SeedPolicy::Shared,
            view: ViewMode::Full,
            view_length: 16,
            heads: 10,
            d_k: 16,
            d_v: 16,
            attn_seed: 0,
            data_dir: None,
            bank: None,
        };
        match name {
            // Attention comparison on the central 16-frame view.
            "paper-4.3" => Ok(RunConfig {
                samples: 8,
                te_count: 100,
                ref_dim: 50,
                input_dim: 50,
                view: ViewMode::Central,
                ..base
            }),
            // Classification: R = 16, L = 10, m = 10, k = 10 over the whole sequence.
            "paper-4.4" => Ok(base),
            other => Err(RtwError::Config(format!(
                "unknown preset {other:?} (expected one of {PRESETS:?})"
            ))),
        }
    }

    /// Parses config text; `preset` is applied first wherever it appears.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                RtwError::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1))
            })?;
            pairs.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        let mut cfg = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, name)) => Self::preset(name)?,
            None => Self::default(),
        };
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Overrides one key. `preset` resets every field to that preset.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| RtwError::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "preset" => *self = Self::preset(value)?,
            "samples" => self.samples = num(key, value)?,
            "te_count" => self.te_count = num(key, value)?,
            "ref_dim" => self.ref_dim = num(key, value)?,
            "input_dim" => self.input_dim = num(key, value)?,
            "angles" => self.angles = num(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "group_size" => self.group_size = num(key, value)?,
            "normalize_te" => self.normalize_te = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "seed_policy" => {
                self.seed_policy = match value {
                    "shared" => SeedPolicy::Shared,
                    "per-sequence" => SeedPolicy::PerSequence,
                    _ => return Err(RtwError::Config(format!("seed_policy: unknown {value:?}"))),
                }
            }
            "view" => {
                self.view = match value {
                    "full" => ViewMode::Full,
                    "central" => ViewMode::Central,
                    _ => return Err(RtwError::Config(format!("view: unknown {value:?}"))),
                }
            }
            "view_length" => self.view_length = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "d_k" => self.d_k = num(key, value)?,
            "d_v" => self.d_v = num(key, value)?,
            "attn_seed" => self.attn_seed = num(key, value)?,
            "data_dir" => self.data_dir = Some(value.to_owned()),
            "bank" => self.bank = Some(value.to_owned()),
            _ => return Err(RtwError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| RtwError::Config(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Canonical text form; `parse(to_text())` gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let policy = match self.seed_policy {
            SeedPolicy::Shared => "shared",
            SeedPolicy::PerSequence => "per-sequence",
        };
        let view = match self.view {
            ViewMode::Full => "full",
            ViewMode::Central => "central",
        };
        let _ = writeln!(s, "preset = {}", self.preset);
        for (k, v) in [
            ("samples", self.samples.to_string()),
            ("te_count", self.te_count.to_string()),
            ("ref_dim", self.ref_dim.to_string()),
            ("input_dim", self.input_dim.to_string()),
            ("angles", self.angles.to_string()),
            ("top_k", self.top_k.to_string()),
            ("group_size", self.group_size.to_string()),
            ("normalize_te", self.normalize_te.to_string()),
            ("seed", self.seed.to_string()),
            ("seed_policy", policy.to_owned()),
            ("view", view.to_owned()),
            ("view_length", self.view_length.to_string()),
            ("heads", self.heads.to_string()),
            ("d_k", self.d_k.to_string()),
            ("d_v", self.d_v.to_string()),
            ("attn_seed", self.attn_seed.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(d) = &self.data_dir {
            let _ = writeln!(s, "data_dir = {d}");
        }
        if let Some(b) = &self.bank {
            let _ = writeln!(s, "bank = {b}");
        }
        s
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            samples: self.samples,
            te_count: self.te_count,
            dim: self.ref_dim,
            group_size: self.group_size,
            seed: self.seed,
            seed_policy: self.seed_policy,
            normalize_te: self.normalize_te,
        }
    }

    pub fn classify_params(&self) -> ClassifyParams {
        ClassifyParams {
            samples: self.samples,
            te_count: self.te_count,
            input_dim: self.input_dim,
            angles: self.angles,
            top_k: self.top_k,
            seed: self.seed,
            normalize_te: self.normalize_te,
        }
    }
}
