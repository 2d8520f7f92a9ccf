//! Line-oriented experiment configs.
//!
//! ```text
//! seed = 7
//!
//! [space]
//! kind = lattice
//! dim = 2
//! side = 41
//!
//! [kernel]
//! kind = ball_walk
//! h = 1
//! lazy = true
//!
//! [experiment]
//! op = gaussian_fit
//! n_min = 64
//! ```
//!
//! `[space]` and `[kernel]` blocks apply to every experiment below them until
//! the next block of the same name. Comments start with `#`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use heatlab::{GraphData, SpaceSpec};

use crate::ops;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, msg: msg.into() })
}

/// Key/value block with the line of every key, for error messages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    pub line: usize,
    map: BTreeMap<String, (String, usize)>,
}

impl Params {
    fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        if self.map.insert(key.to_string(), (value.to_string(), line)).is_some() {
            return err(line, format!("duplicate key `{key}`"));
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, usize)> {
        self.map.iter().map(|(k, (_, l))| (k.as_str(), *l))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(v, _)| v.as_str())
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(self.line, |(_, l)| *l)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some((v, l)) => v
                .parse()
                .map(Some)
                .or_else(|_| err(*l, format!("`{key}` must be {what}, got `{v}`"))),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.parsed(key, "a number")?.unwrap_or(default))
    }

    pub fn req_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.parsed(key, "a number")?
            .map_or_else(|| err(self.line, format!("missing `{key}`")), Ok)
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parsed(key, "a non-negative integer")?.unwrap_or(default))
    }

    pub fn req_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parsed(key, "a non-negative integer")?
            .map_or_else(|| err(self.line, format!("missing `{key}`")), Ok)
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => err(self.line_of(key), format!("`{key}` must be true or false, got `{v}`")),
        }
    }

    pub fn list_f64(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(raw) = self.raw(key) else { return Ok(None) };
        raw.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .or_else(|_| err(self.line_of(key), format!("`{key}` must be a comma-separated list of numbers")))
    }

    pub fn list_usize(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(raw) = self.raw(key) else { return Ok(None) };
        raw.split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .or_else(|_| err(self.line_of(key), format!("`{key}` must be a comma-separated list of integers")))
    }

    fn check_keys(&self, allowed: &[&str], block: &str) -> Result<(), ConfigError> {
        for (k, l) in self.keys() {
            if !allowed.contains(&k) {
                return err(l, format!("unknown key `{k}` in {block}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceConfig {
    pub spec: SpaceSpec,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    BallWalk { h: f64 },
    AnnulusWalk { h: f64, h1: f64, h2: f64 },
    Srw,
    File { path: PathBuf, h: f64, h_prime: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub lazy: bool,
    pub line: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expect {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub op: String,
    pub params: Params,
    pub seed: u64,
    pub assert: bool,
    pub expect: Expect,
    /// Indices into `ExperimentConfig::spaces` / `kernels`.
    pub space: Option<usize>,
    pub kernel: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub budget: Option<u64>,
    pub svg: bool,
    pub spaces: Vec<SpaceConfig>,
    pub kernels: Vec<KernelConfig>,
    pub experiments: Vec<Experiment>,
}

const GLOBAL_KEYS: &[&str] = &["seed", "out", "budget", "svg"];
const SPACE_KEYS: &[&str] = &[
    "kind", "dim", "side", "alpha", "window", "step", "degree", "depth", "left", "right", "n", "file",
];
const KERNEL_KEYS: &[&str] = &["kind", "h", "h1", "h2", "hp", "lazy", "file"];
pub const COMMON_KEYS: &[&str] = &["op", "seed", "assert", "expect", "center", "vertex"];

fn split_blocks(text: &str) -> Result<(Params, Vec<(String, Params)>), ConfigError> {
    let mut globals = Params { line: 1, ..Params::default() };
    let mut blocks: Vec<(String, Params)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        if let Some(name) = t.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(line, "unterminated section header");
            };
            let name = name.trim();
            if !matches!(name, "space" | "kernel" | "experiment") {
                return err(line, format!("unknown section `[{name}]`"));
            }
            blocks.push((name.to_string(), Params { line, ..Params::default() }));
            continue;
        }
        let Some((k, v)) = t.split_once('=') else {
            return err(line, "expected `key = value`");
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return err(line, format!("malformed key `{k}`"));
        }
        match blocks.last_mut() {
            Some((_, p)) => p.insert(k, v, line)?,
            None => globals.insert(k, v, line)?,
        }
    }
    Ok((globals, blocks))
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn space_config(p: &Params, base: &Path) -> Result<SpaceConfig, ConfigError> {
    p.check_keys(SPACE_KEYS, "[space]")?;
    let kind = p.raw("kind").map_or_else(|| err(p.line, "missing `kind`"), Ok)?;
    let spec = match kind {
        "lattice" => SpaceSpec::Lattice {
            dim: p.req_usize("dim")?,
            side: p.req_usize("side")?,
        },
        "euclidean_radial" => SpaceSpec::EuclideanRadial {
            dim: p.usize("dim", 1)?,
            alpha: p.f64("alpha", 0.0)?,
            window: p.req_f64("window")?,
            step: p.req_f64("step")?,
        },
        "broken_line" => SpaceSpec::BrokenLine {
            window: p.req_f64("window")?,
            step: p.req_f64("step")?,
        },
        "tree" => SpaceSpec::Tree {
            degree: p.req_usize("degree")?,
            depth: p.req_usize("depth")?,
        },
        "bipartite" => SpaceSpec::Bipartite {
            left: p.req_usize("left")?,
            right: p.req_usize("right")?,
        },
        "path" => SpaceSpec::CustomGraph(GraphData::path(p.req_usize("n")?)),
        "cycle" => SpaceSpec::CustomGraph(GraphData::cycle(p.req_usize("n")?)),
        "custom_graph" => {
            let file = p.raw("file").map_or_else(|| err(p.line, "missing `file`"), Ok)?;
            let path = resolve(base, file);
            let text = std::fs::read_to_string(&path)
                .or_else(|e| err(p.line_of("file"), format!("cannot read {}: {e}", path.display())))?;
            let g = GraphData::parse(&text)
                .or_else(|e| err(p.line_of("file"), format!("{}: {e}", path.display())))?;
            SpaceSpec::CustomGraph(g)
        }
        other => return err(p.line_of("kind"), format!("unknown space kind `{other}`")),
    };
    Ok(SpaceConfig { spec, line: p.line })
}

fn kernel_config(p: &Params, base: &Path) -> Result<KernelConfig, ConfigError> {
    p.check_keys(KERNEL_KEYS, "[kernel]")?;
    let kind = match p.raw("kind").map_or_else(|| err(p.line, "missing `kind`"), Ok)? {
        "ball_walk" => KernelKind::BallWalk { h: p.req_f64("h")? },
        "annulus_walk" => KernelKind::AnnulusWalk {
            h: p.req_f64("h")?,
            h1: p.req_f64("h1")?,
            h2: p.req_f64("h2")?,
        },
        "srw" => KernelKind::Srw,
        "file" => KernelKind::File {
            path: resolve(base, p.raw("file").map_or_else(|| err(p.line, "missing `file`"), Ok)?),
            h: p.req_f64("h")?,
            h_prime: p.req_f64("hp")?,
        },
        other => return err(p.line_of("kind"), format!("unknown kernel kind `{other}`")),
    };
    Ok(KernelConfig {
        kind,
        lazy: p.bool("lazy", false)?,
        line: p.line,
    })
}

impl ExperimentConfig {
    /// Parse a config; relative `file` and `out` paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
        let (globals, blocks) = split_blocks(text)?;
        globals.check_keys(GLOBAL_KEYS, "the global block")?;
        let mut cfg = ExperimentConfig {
            seed: globals.u64("seed")?.unwrap_or(0),
            out: globals.raw("out").map(|o| resolve(base, o)),
            budget: globals.u64("budget")?,
            svg: globals.bool("svg", true)?,
            spaces: Vec::new(),
            kernels: Vec::new(),
            experiments: Vec::new(),
        };
        for (name, p) in blocks {
            match name.as_str() {
                "space" => cfg.spaces.push(space_config(&p, base)?),
                "kernel" => cfg.kernels.push(kernel_config(&p, base)?),
                _ => {
                    let op = p.raw("op").map_or_else(|| err(p.line, "missing `op`"), Ok)?.to_string();
                    let Some(spec) = ops::lookup(&op) else {
                        return err(p.line_of("op"), format!("unknown operation `{op}`"));
                    };
                    for (k, l) in p.keys() {
                        if !COMMON_KEYS.contains(&k) && !spec.keys.contains(&k) {
                            return err(l, format!("unknown key `{k}` for `{op}`"));
                        }
                    }
                    if spec.needs_space && cfg.spaces.is_empty() {
                        return err(p.line, format!("`{op}` needs a [space] block above it"));
                    }
                    if spec.needs_kernel && cfg.kernels.is_empty() {
                        return err(p.line, format!("`{op}` needs a [kernel] block above it"));
                    }
                    let expect = match p.raw("expect") {
                        None | Some("pass") => Expect::Pass,
                        Some("fail") => Expect::Fail,
                        Some(v) => return err(p.line_of("expect"), format!("`expect` must be pass or fail, got `{v}`")),
                    };
                    let index = cfg.experiments.len() as u64;
                    cfg.experiments.push(Experiment {
                        seed: p.u64("seed")?.unwrap_or(cfg.seed.wrapping_add(index)),
                        assert: p.bool("assert", false)?,
                        expect,
                        space: cfg.spaces.len().checked_sub(1),
                        kernel: cfg.kernels.len().checked_sub(1),
                        op,
                        params: p,
                    });
                }
            }
        }
        Ok(cfg)
    }

    /// Re-derive per-experiment seeds from a new global seed, keeping explicit ones.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        for (i, e) in self.experiments.iter_mut().enumerate() {
            if e.params.raw("seed").is_none() {
                e.seed = seed.wrapping_add(i as u64);
            }
        }
    }
}
