use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub seed: u64,
    pub adaptation_n: usize,
    pub warmup_n: usize,
    pub thin_factor: usize,
}

/// Posterior draws stored chain-major: `values[(chain * draws + draw) * params + param]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMatrix {
    pub chain_count: usize,
    pub draws_per_chain: usize,
    pub monitored: Vec<String>,
    pub values: Vec<f64>,
    /// Post-warm-up iteration number of each kept draw (same for every chain).
    pub iterations: Vec<usize>,
    pub meta: DrawsMeta,
}

impl DrawsMatrix {
    pub fn param_count(&self) -> usize {
        self.monitored.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.monitored.iter().position(|m| m == name)
    }

    #[inline]
    pub fn get(&self, chain: usize, draw: usize, param: usize) -> f64 {
        self.values[(chain * self.draws_per_chain + draw) * self.param_count() + param]
    }

    /// Draws of one parameter, one vector per chain.
    pub fn chains_of(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.chain_count)
            .map(|c| (0..self.draws_per_chain).map(|d| self.get(c, d, param)).collect())
            .collect()
    }

    pub fn chains_by_name(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        self.index_of(name).map(|p| self.chains_of(p))
    }

    /// All draws of one parameter pooled across chains.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.chains_by_name(name).map(|c| c.concat())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV with columns `chain,iter,<monitored...>`, one row per draw.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.monitored.iter().cloned());
        wtr.write_record(&header)?;
        let p = self.param_count();
        let mut row: Vec<String> = Vec::with_capacity(p + 2);
        for c in 0..self.chain_count {
            for d in 0..self.draws_per_chain {
                row.clear();
                row.push(c.to_string());
                row.push(self.iterations[d].to_string());
                row.extend((0..p).map(|k| self.get(c, d, k).to_string()));
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }

    /// Reads the draws CSV. Protocol metadata is not part of the CSV and is
    /// left zeroed.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "chain" || &headers[1] != "iter" {
            return Err(Error::Config("draws header must start with chain,iter".into()));
        }
        let monitored: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut per_chain: Vec<Vec<f64>> = Vec::new();
        let mut iterations: Vec<Vec<usize>> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let chain: usize = rec[0]
                .parse()
                .map_err(|_| Error::Config(format!("line {line}: bad chain index {:?}", &rec[0])))?;
            let iter: usize = rec[1]
                .parse()
                .map_err(|_| Error::Config(format!("line {line}: bad iteration {:?}", &rec[1])))?;
            if chain >= per_chain.len() {
                per_chain.resize(chain + 1, Vec::new());
                iterations.resize(chain + 1, Vec::new());
            }
            for (k, cell) in rec.iter().skip(2).enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Config(format!("line {line}: column {}: not a number: {cell:?}", monitored[k]))
                })?;
                per_chain[chain].push(v);
            }
            iterations[chain].push(iter);
        }
        let chain_count = per_chain.len();
        let draws_per_chain = iterations.first().map_or(0, Vec::len);
        if chain_count == 0 || iterations.iter().any(|it| it.len() != draws_per_chain) {
            return Err(Error::Config("draws file must contain equally long, non-empty chains".into()));
        }
        Ok(Self {
            chain_count,
            draws_per_chain,
            monitored,
            values: per_chain.concat(),
            iterations: iterations.swap_remove(0),
            meta: DrawsMeta { seed: 0, adaptation_n: 0, warmup_n: 0, thin_factor: 0 },
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Builds a matrix from per-chain, per-parameter columns (all chains the
    /// same length).
    pub fn from_columns(monitored: Vec<String>, chains: Vec<Vec<Vec<f64>>>, meta: DrawsMeta) -> Self {
        let chain_count = chains.len();
        let draws_per_chain = chains.first().and_then(|c| c.first()).map_or(0, Vec::len);
        let p = monitored.len();
        let mut values = Vec::with_capacity(chain_count * draws_per_chain * p);
        for chain in &chains {
            for d in 0..draws_per_chain {
                values.extend((0..p).map(|k| chain[k][d]));
            }
        }
        let thin = meta.thin_factor.max(1);
        Self {
            chain_count,
            draws_per_chain,
            monitored,
            values,
            iterations: (1..=draws_per_chain).map(|d| d * thin).collect(),
            meta,
        }
    }
}
