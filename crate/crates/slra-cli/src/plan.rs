//! Flat key-value text files: benchmark plans and run configs.
//!
//! The format is one `key = value` pair per line. Blank lines and lines
//! starting with `#` are skipped, and a trailing `# comment` after the value
//! is stripped. Keys may appear at most once. Unknown keys are errors so a
//! typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use slra_core::spectral::SchattenP;

/// How a benchmark plan sources its matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    /// Dense `n x d` matrix with singular values `i^-alpha` and random
    /// orthonormal factors drawn fresh per trial.
    PowerLaw { alpha: f64 },
    /// Square diagonal operator with entries `i^-alpha`; requires `n = d`.
    PowerLawDiag { alpha: f64 },
    /// `I - W/5` for a Wishart draw `W`; square, sampled fresh per trial.
    Wishart,
    /// One matrix shared by every run, read from a dense CSV file.
    DenseFile(PathBuf),
    /// One matrix shared by every run, read from a Matrix Market file.
    MatrixMarketFile(PathBuf),
}

impl InstanceSpec {
    /// Short id used in the `instance` CSV column.
    pub fn label(&self, n: usize, d: usize) -> String {
        fn trim_float(x: f64) -> String {
            format!("{x}")
        }
        match self {
            InstanceSpec::PowerLaw { alpha } => {
                format!("powerlaw-n{n}-d{d}-a{}", trim_float(*alpha))
            }
            InstanceSpec::PowerLawDiag { alpha } => {
                format!("powerlaw-diag-d{d}-a{}", trim_float(*alpha))
            }
            InstanceSpec::Wishart => format!("wishart-n{n}"),
            InstanceSpec::DenseFile(path) | InstanceSpec::MatrixMarketFile(path) => path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }
}

/// A parsed benchmark sweep: one instance family crossed with grids of
/// `k`, `p`, and `eps`, each cell repeated over seeded trials.
#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub instance: InstanceSpec,
    /// Row count for synthetic instances; `None` defers to the file.
    pub n: Option<usize>,
    /// Column count for synthetic instances; `None` defers to the file.
    pub d: Option<usize>,
    pub ks: Vec<usize>,
    pub ps: Vec<SchattenP>,
    pub epss: Vec<f64>,
    /// Trials per cell.
    pub seeds: usize,
    /// Schedule constant shared by both methods.
    pub c: f64,
}

/// Optional defaults for the single-run subcommand. Command-line flags
/// override anything set here.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub p: Option<SchattenP>,
    pub c: Option<f64>,
    pub seed: Option<u64>,
    pub repetitions: Option<usize>,
    pub block_cap: Option<usize>,
}

/// Key-value lines with duplicate detection and typed accessors. `origin`
/// names the file in error messages.
struct KvFile {
    map: BTreeMap<String, (String, usize)>,
    origin: String,
}

impl KvFile {
    fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{line_no}: expected `key = value`"))?;
            let key = key.trim().to_string();
            let value = value
                .split('#')
                .next()
                .unwrap_or_default()
                .trim()
                .to_string();
            if key.is_empty() {
                bail!("{origin}:{line_no}: empty key");
            }
            if value.is_empty() {
                bail!("{origin}:{line_no}: key `{key}` has no value");
            }
            if let Some((_, first)) = map.insert(key.clone(), (value, line_no)) {
                bail!("{origin}:{line_no}: key `{key}` already set on line {first}");
            }
        }
        Ok(KvFile {
            map,
            origin: origin.to_string(),
        })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn take_parsed<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((value, line_no)) => value.parse::<T>().map(Some).map_err(|e| {
                anyhow!("{}:{line_no}: bad `{key}` value `{value}`: {e}", self.origin)
            }),
        }
    }

    fn take_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((value, line_no)) => value
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse::<T>().map_err(|e| {
                        anyhow!("{}:{line_no}: bad `{key}` entry `{item}`: {e}", self.origin)
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (_, line_no))) = self.map.into_iter().next() {
            bail!("{}:{line_no}: unknown key `{key}`", self.origin);
        }
        Ok(())
    }
}

fn parse_instance(value: &str, alpha: f64) -> Result<InstanceSpec> {
    if let Some(path) = value.strip_prefix("dense:") {
        return Ok(InstanceSpec::DenseFile(PathBuf::from(path.trim())));
    }
    if let Some(path) = value.strip_prefix("matrixmarket:") {
        return Ok(InstanceSpec::MatrixMarketFile(PathBuf::from(path.trim())));
    }
    match value {
        "powerlaw" => Ok(InstanceSpec::PowerLaw { alpha }),
        "powerlaw-diag" => Ok(InstanceSpec::PowerLawDiag { alpha }),
        "wishart" => Ok(InstanceSpec::Wishart),
        other => bail!(
            "unknown instance `{other}`; expected powerlaw, powerlaw-diag, wishart, \
             dense:<path>, or matrixmarket:<path>"
        ),
    }
}

impl BenchPlan {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut kv = KvFile::parse(text, origin)?;

        let alpha = kv.take_parsed::<f64>("alpha")?.unwrap_or(1.0);
        if !alpha.is_finite() {
            bail!("{origin}: alpha must be finite");
        }
        let (instance_value, instance_line) = kv
            .take("instance")
            .ok_or_else(|| anyhow!("{origin}: missing required key `instance`"))?;
        let instance = parse_instance(&instance_value, alpha)
            .with_context(|| format!("{origin}:{instance_line}"))?;

        let n = kv.take_parsed::<usize>("n")?;
        let d = kv.take_parsed::<usize>("d")?;
        let ks = kv
            .take_list::<usize>("k")?
            .ok_or_else(|| anyhow!("{origin}: missing required key `k`"))?;
        let ps = kv
            .take_list::<SchattenP>("p")?
            .ok_or_else(|| anyhow!("{origin}: missing required key `p`"))?;
        let epss = kv
            .take_list::<f64>("eps")?
            .ok_or_else(|| anyhow!("{origin}: missing required key `eps`"))?;
        let seeds = kv.take_parsed::<usize>("seeds")?.unwrap_or(10);
        let c = kv.take_parsed::<f64>("c")?.unwrap_or(4.0);
        kv.finish()?;

        let synthetic = !matches!(
            instance,
            InstanceSpec::DenseFile(_) | InstanceSpec::MatrixMarketFile(_)
        );
        if synthetic {
            if matches!(instance, InstanceSpec::Wishart) {
                if d.is_some() && d != n {
                    bail!("{origin}: wishart instances are square; drop `d` or set it equal to `n`");
                }
                n.ok_or_else(|| anyhow!("{origin}: wishart instances need `n`"))?;
            } else {
                n.ok_or_else(|| anyhow!("{origin}: synthetic instances need `n`"))?;
                d.ok_or_else(|| anyhow!("{origin}: synthetic instances need `d`"))?;
            }
            if matches!(instance, InstanceSpec::PowerLawDiag { .. }) && n != d {
                bail!("{origin}: powerlaw-diag instances are square; set n = d");
            }
        } else if n.is_some() || d.is_some() {
            bail!("{origin}: file instances take their shape from the file; drop `n` and `d`");
        }

        if ks.is_empty() || ks.contains(&0) {
            bail!("{origin}: `k` needs at least one positive entry");
        }
        for &eps in &epss {
            if !(eps > 0.0 && eps < 1.0) {
                bail!("{origin}: eps entries must lie in (0, 1), got {eps}");
            }
        }
        if epss.is_empty() {
            bail!("{origin}: `eps` needs at least one entry");
        }
        if seeds == 0 {
            bail!("{origin}: `seeds` must be at least 1");
        }
        if !(c > 0.0) || !c.is_finite() {
            bail!("{origin}: `c` must be a positive finite number, got {c}");
        }

        Ok(BenchPlan {
            instance,
            n,
            d,
            ks,
            ps,
            epss,
            seeds,
            c,
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut kv = KvFile::parse(text, origin)?;
        let cfg = RunConfig {
            k: kv.take_parsed("k")?,
            eps: kv.take_parsed("eps")?,
            p: kv.take_parsed("p")?,
            c: kv.take_parsed("c")?,
            seed: kv.take_parsed("seed")?,
            repetitions: kv.take_parsed("repetitions")?,
            block_cap: kv.take_parsed("block_cap")?,
        };
        kv.finish()?;
        Ok(cfg)
    }
}
