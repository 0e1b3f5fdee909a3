//! Run configuration: defaults, flat key=value config files, and CLI
//! overrides. Every output document embeds the resolved configuration.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use magcone::assembly::TensorGrid;
use magcone::geometry::ConeConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub n_t: usize,
    pub n_phi: usize,
    pub m_max: usize,
    pub t_max: f64,
    pub tol: f64,
    pub seed: u64,
    pub eps0: f64,
    pub fit_degree: usize,
    pub sweep_alphas: Vec<f64>,
    pub sweep_betas: Vec<f64>,
    pub jobs: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.2,
            beta: 0.0,
            k: 3,
            n_t: 200,
            n_phi: 24,
            m_max: 8,
            t_max: 16.0,
            tol: 1e-8,
            seed: 42,
            eps0: 0.25,
            fit_degree: 2,
            sweep_alphas: vec![0.4, 0.3, 0.2, 0.15, 0.1, 0.07, 0.05],
            sweep_betas: vec![0.0],
            jobs: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Apply one `key=value` assignment (config file line or override).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "alpha" => self.alpha = parse(v)?,
            "beta" => self.beta = parse(v)?,
            "k" => self.k = parse(v)?,
            "nt" | "n_t" => self.n_t = parse(v)?,
            "nphi" | "n_phi" => self.n_phi = parse(v)?,
            "mmax" | "m_max" => self.m_max = parse(v)?,
            "tmax" | "t_max" => self.t_max = parse(v)?,
            "tol" => self.tol = parse(v)?,
            "seed" => self.seed = parse(v)?,
            "eps0" => self.eps0 = parse(v)?,
            "fit_degree" => self.fit_degree = parse(v)?,
            "sweep_alphas" => self.sweep_alphas = parse_list(v)?,
            "sweep_betas" => self.sweep_betas = parse_list(v)?,
            "jobs" => self.jobs = parse(v)?,
            "out" => self.out = PathBuf::from(v),
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    /// Load `key=value` lines ('#' starts a comment, blank lines ignored).
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key=value", path.display(), lineno + 1))?;
            self.set(key, value)
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    pub fn cone(&self) -> Result<ConeConfig> {
        ConeConfig::new(self.alpha, self.beta).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn cone_at(&self, alpha: f64, beta: f64) -> Result<ConeConfig> {
        ConeConfig::new(alpha, beta).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn grid(&self) -> Result<TensorGrid> {
        TensorGrid::new(self.n_t, self.n_phi, self.m_max, self.t_max)
            .map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn validate_sweeps(&self) -> Result<()> {
        if self.sweep_alphas.is_empty() {
            bail!("sweep_alphas must be nonempty");
        }
        if self.sweep_betas.is_empty() {
            bail!("sweep_betas must be nonempty");
        }
        for &a in &self.sweep_alphas {
            ConeConfig::new(a, 0.0).map_err(|e| anyhow::anyhow!("sweep alpha {a}: {e}"))?;
        }
        for &b in &self.sweep_betas {
            ConeConfig::new(0.2, b).map_err(|e| anyhow::anyhow!("sweep beta {b}: {e}"))?;
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow::anyhow!("bad value `{v}`: {e}"))
}

fn parse_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse::<f64>(s.trim()))
        .collect::<Result<Vec<f64>>>()
}
