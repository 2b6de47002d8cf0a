//! Chain CSV files, key=value run metadata and binary checkpoints.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use nalgebra::{DMatrix, DVector};

use super::adaptive::{AdaptiveMetropolis, RunningMoments};
use super::chain::ChainStore;
use super::{McmcConfig, SamplerError, StepMask};
use crate::model::{ModelSpec, ModelVariant, OutcomeTerms, ParameterState, PriorSpec, N_BETA};
use crate::stats::RngState;

pub const CHECKPOINT_MAGIC: &[u8; 10] = b"LACSHCKPT1";
const METADATA_VERSION: &str = "1";

/// Everything needed to rebuild a chain's configuration and to parse its
/// CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMetadata {
    pub config: McmcConfig,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub q: usize,
    pub anchor_index: usize,
    pub draws: usize,
    pub acceptance_count: u64,
    pub proposals: u64,
}

impl ChainMetadata {
    /// Dimensions are taken from the caller; use [`ChainMetadata::infer`]
    /// when only the draws are at hand.
    pub fn from_store(store: &ChainStore, n: usize, p: usize, k: usize, q: usize) -> Self {
        ChainMetadata {
            config: store.config.clone(),
            n,
            p,
            k,
            q,
            anchor_index: store.anchor_index,
            draws: store.len(),
            acceptance_count: store.acceptance_count,
            proposals: store.proposals,
        }
    }

    /// Layout read off the first draw. K and Q are not separable from the
    /// draws, so all treatment covariates are counted in `k`.
    pub fn infer(store: &ChainStore) -> Option<Self> {
        let d = store.draws.first()?;
        Some(Self::from_store(store, d.h.len(), d.a.len(), d.gamma.len() - 1, 0))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let c = &self.config;
        let pr = &c.prior;
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}");
        kv("version", METADATA_VERSION.into())?;
        kv("variant", c.model.variant.name().into())?;
        kv("outcome_terms", c.model.outcome_terms.name().into())?;
        kv("n", self.n.to_string())?;
        kv("p", self.p.to_string())?;
        kv("k", self.k.to_string())?;
        kv("q", self.q.to_string())?;
        kv("anchor_index", self.anchor_index.to_string())?;
        kv("seed", c.seed.to_string())?;
        kv("chain_id", c.chain_id.to_string())?;
        kv("n_scans", c.n_scans.to_string())?;
        kv("burn_in", c.burn_in.to_string())?;
        kv("thin", c.thin.to_string())?;
        kv("adapt_start", c.adapt_start.to_string())?;
        kv("proposal_scale_v", c.proposal_scale_v.to_string())?;
        kv("mixture_weight", c.mixture_weight.to_string())?;
        kv("narrow_sd", c.narrow_sd.to_string())?;
        kv("prior.coef_mean", pr.coef_mean.to_string())?;
        kv("prior.coef_var", pr.coef_var.to_string())?;
        kv("prior.log_sigma2_h_mean", pr.log_sigma2_h_mean.to_string())?;
        kv("prior.log_sigma2_h_var", pr.log_sigma2_h_var.to_string())?;
        kv("prior.log_phi_mean", pr.log_phi_mean.to_string())?;
        kv("prior.log_phi_var", pr.log_phi_var.to_string())?;
        kv("prior.sigma_y_df", pr.sigma_y_df(self.p).to_string())?;
        kv("prior.sigma_y_scale", pr.sigma_y_scale.to_string())?;
        kv("prior.sigma2_t_shape", pr.sigma2_t_shape.to_string())?;
        kv("prior.sigma2_t_scale", pr.sigma2_t_scale.to_string())?;
        kv("draws", self.draws.to_string())?;
        kv("acceptance_count", self.acceptance_count.to_string())?;
        kv("proposals", self.proposals.to_string())?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, SamplerError> {
        let mut map = BTreeMap::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SamplerError::ChainFormat(format!("metadata line without '=': {line}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).ok_or_else(|| SamplerError::ChainFormat(format!("metadata lacks {k}")));
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, SamplerError> {
            v.parse().map_err(|_| SamplerError::ChainFormat(format!("bad metadata value {k}={v}")))
        }
        let num = |k: &str| -> Result<f64, SamplerError> { parse(k, get(k)?) };
        let int = |k: &str| -> Result<u64, SamplerError> { parse(k, get(k)?) };
        if get("version")? != METADATA_VERSION {
            return Err(SamplerError::ChainFormat(format!("unsupported metadata version {}", get("version")?)));
        }
        let variant =
            ModelVariant::parse(get("variant")?).ok_or_else(|| SamplerError::ChainFormat("unknown variant".into()))?;
        let outcome_terms = OutcomeTerms::parse(get("outcome_terms")?)
            .ok_or_else(|| SamplerError::ChainFormat("unknown outcome terms".into()))?;
        let prior = PriorSpec {
            coef_mean: num("prior.coef_mean")?,
            coef_var: num("prior.coef_var")?,
            log_sigma2_h_mean: num("prior.log_sigma2_h_mean")?,
            log_sigma2_h_var: num("prior.log_sigma2_h_var")?,
            log_phi_mean: num("prior.log_phi_mean")?,
            log_phi_var: num("prior.log_phi_var")?,
            sigma_y_df: Some(num("prior.sigma_y_df")?),
            sigma_y_scale: num("prior.sigma_y_scale")?,
            sigma2_t_shape: num("prior.sigma2_t_shape")?,
            sigma2_t_scale: num("prior.sigma2_t_scale")?,
        };
        let config = McmcConfig {
            n_scans: int("n_scans")?,
            burn_in: int("burn_in")?,
            thin: int("thin")?,
            seed: int("seed")?,
            chain_id: int("chain_id")?,
            adapt_start: int("adapt_start")?,
            proposal_scale_v: num("proposal_scale_v")?,
            mixture_weight: num("mixture_weight")?,
            narrow_sd: num("narrow_sd")?,
            model: ModelSpec { variant, outcome_terms },
            prior,
            steps: StepMask::default(),
        };
        Ok(ChainMetadata {
            config,
            n: int("n")? as usize,
            p: int("p")? as usize,
            k: int("k")? as usize,
            q: int("q")? as usize,
            anchor_index: int("anchor_index")? as usize,
            draws: int("draws")? as usize,
            acceptance_count: int("acceptance_count")?,
            proposals: int("proposals")?,
        })
    }

    /// CSV column names for this layout.
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.p).map(|j| format!("a_{j}")).collect();
        h.extend((1..=self.n).map(|i| format!("H_{i}")));
        for j in 1..=self.p {
            for i in j..=self.p {
                h.push(format!("SigmaY_{i}_{j}"));
            }
        }
        h.extend((0..N_BETA).map(|k| format!("beta_{k}")));
        h.extend((0..1 + self.k + self.q).map(|k| format!("gamma_{k}")));
        h.extend(["sigma2_T".to_string(), "sigma2_H".into(), "phi".into()]);
        if self.config.model.variant == ModelVariant::BaseLhfi {
            h.extend((0..2 + self.k + self.q).map(|k| format!("zeta_{k}")));
        }
        h.extend(["scan".to_string(), "accepted".into()]);
        h
    }

    /// Parameter columns of the header (without `scan` and `accepted`).
    pub fn parameter_names(&self) -> Vec<String> {
        let mut h = self.header();
        h.truncate(h.len() - 2);
        h
    }

    /// One state flattened in [`ChainMetadata::parameter_names`] order.
    pub fn parameter_values(&self, s: &ParameterState) -> Vec<f64> {
        let mut r: Vec<f64> = s.a.iter().chain(s.h.iter()).copied().collect();
        for j in 0..self.p {
            for i in j..self.p {
                r.push(s.sigma_y[(i, j)]);
            }
        }
        r.extend(s.beta.iter().chain(s.gamma.iter()));
        r.extend([s.sigma2_t, s.sigma2_h, s.phi]);
        if self.config.model.variant == ModelVariant::BaseLhfi {
            r.extend(s.zeta.iter());
        }
        r
    }

    fn row(&self, s: &ParameterState, scan: u64, accepted: bool) -> Vec<String> {
        let mut r: Vec<String> = self.parameter_values(s).iter().map(f64::to_string).collect();
        r.push(scan.to_string());
        r.push(u8::from(accepted).to_string());
        r
    }

    fn parse_row(&self, rec: &csv::StringRecord, line: u64) -> Result<(ParameterState, u64, bool), SamplerError> {
        let vals: Vec<&str> = rec.iter().collect();
        let expected = self.header().len();
        if vals.len() != expected {
            return Err(SamplerError::ChainFormat(format!("line {line}: {} fields, expected {expected}", vals.len())));
        }
        let mut it = vals.iter();
        let mut next = || -> Result<f64, SamplerError> {
            let v = it.next().expect("length checked");
            v.parse().map_err(|_| SamplerError::ChainFormat(format!("line {line}: bad number {v:?}")))
        };
        let mut take = |m: usize| -> Result<DVector<f64>, SamplerError> {
            let mut v = DVector::zeros(m);
            for i in 0..m {
                v[i] = next()?;
            }
            Ok(v)
        };
        let a = take(self.p)?;
        let h = take(self.n)?;
        let mut sigma_y = DMatrix::zeros(self.p, self.p);
        for j in 0..self.p {
            let col = take(self.p - j)?;
            for (off, v) in col.iter().enumerate() {
                sigma_y[(j + off, j)] = *v;
                sigma_y[(j, j + off)] = *v;
            }
        }
        let beta = take(N_BETA)?;
        let gamma = take(1 + self.k + self.q)?;
        let tail = take(3)?;
        let zeta = if self.config.model.variant == ModelVariant::BaseLhfi {
            take(2 + self.k + self.q)?
        } else {
            DVector::zeros(2 + self.k + self.q)
        };
        let scan_f = take(1)?[0];
        let acc = take(1)?[0];
        let state =
            ParameterState { a, h, sigma_y, beta, gamma, sigma2_t: tail[0], sigma2_h: tail[1], phi: tail[2], zeta };
        Ok((state, scan_f as u64, acc != 0.0))
    }
}

/// One header line, then one row per retained draw.
pub fn write_chain_csv<W: Write>(store: &ChainStore, meta: &ChainMetadata, out: W) -> Result<(), SamplerError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let map = |e: csv::Error| SamplerError::ChainFormat(e.to_string());
    w.write_record(meta.header()).map_err(map)?;
    for ((s, &scan), &acc) in store.draws.iter().zip(&store.scan_index).zip(&store.accepted) {
        w.write_record(meta.row(s, scan, acc)).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chain_csv<R: Read>(input: R, meta: &ChainMetadata) -> Result<ChainStore, SamplerError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> =
        r.headers().map_err(|e| SamplerError::ChainFormat(e.to_string()))?.iter().map(str::to_string).collect();
    if header != meta.header() {
        return Err(SamplerError::ChainFormat("chain header does not match its metadata".into()));
    }
    let mut store = ChainStore {
        draws: Vec::new(),
        scan_index: Vec::new(),
        accepted: Vec::new(),
        acceptance_count: meta.acceptance_count,
        proposals: meta.proposals,
        proposal_covariance: DMatrix::zeros(0, 0),
        config: meta.config.clone(),
        anchor_index: meta.anchor_index,
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| SamplerError::ChainFormat(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let (s, scan, acc) = meta.parse_row(&rec, line)?;
        store.draws.push(s);
        store.scan_index.push(scan);
        store.accepted.push(acc);
    }
    if store.draws.len() != meta.draws {
        return Err(SamplerError::ChainFormat(format!(
            "chain has {} draws, metadata says {}",
            store.draws.len(),
            meta.draws
        )));
    }
    Ok(store)
}

/// Resumable sampler state: parameters, both RNG positions, adaptation
/// history and the Metropolis block coordinates. Retained draws are not
/// included.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub scan: u64,
    pub state: ParameterState,
    pub main_rng: RngState,
    pub treatment_rng: RngState,
    pub adapt: AdaptiveMetropolis,
    pub block: DVector<f64>,
}

struct Enc(Vec<u8>);

impl Enc {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec(&mut self, v: &DVector<f64>) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
    fn mat(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        m.iter().for_each(|x| self.f64(*x));
    }
    fn rng(&mut self, r: &RngState) {
        self.0.extend_from_slice(&r.seed);
        self.u64(r.stream);
        self.0.extend_from_slice(&r.word_pos.to_le_bytes());
    }
}

struct Dec<'a>(&'a [u8]);

impl Dec<'_> {
    fn bytes<const M: usize>(&mut self) -> Result<[u8; M], SamplerError> {
        if self.0.len() < M {
            return Err(SamplerError::Checkpoint("truncated checkpoint".into()));
        }
        let (head, rest) = self.0.split_at(M);
        self.0 = rest;
        Ok(head.try_into().expect("length checked"))
    }
    fn u64(&mut self) -> Result<u64, SamplerError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, SamplerError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn len(&mut self) -> Result<usize, SamplerError> {
        let n = self.u64()?;
        if n > (self.0.len() / 8) as u64 {
            return Err(SamplerError::Checkpoint("checkpoint length field out of range".into()));
        }
        Ok(n as usize)
    }
    fn vec(&mut self) -> Result<DVector<f64>, SamplerError> {
        let n = self.len()?;
        let mut v = DVector::zeros(n);
        for i in 0..n {
            v[i] = self.f64()?;
        }
        Ok(v)
    }
    fn mat(&mut self) -> Result<DMatrix<f64>, SamplerError> {
        let r = self.len()?;
        let c = self.len()?;
        let mut m = DMatrix::zeros(r, c);
        for x in m.iter_mut() {
            *x = self.f64()?;
        }
        Ok(m)
    }
    fn rng(&mut self) -> Result<RngState, SamplerError> {
        Ok(RngState { seed: self.bytes()?, stream: self.u64()?, word_pos: u128::from_le_bytes(self.bytes()?) })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc(CHECKPOINT_MAGIC.to_vec());
        e.u64(self.scan);
        let s = &self.state;
        e.vec(&s.a);
        e.vec(&s.h);
        e.mat(&s.sigma_y);
        e.vec(&s.beta);
        e.vec(&s.gamma);
        e.f64(s.sigma2_t);
        e.f64(s.sigma2_h);
        e.f64(s.phi);
        e.vec(&s.zeta);
        e.rng(&self.main_rng);
        e.rng(&self.treatment_rng);
        let a = &self.adapt;
        e.u64(a.dim as u64);
        e.u64(a.adapt_start);
        e.f64(a.scale_v);
        e.f64(a.mixture_weight);
        e.f64(a.narrow_sd);
        e.u64(a.scans);
        e.u64(a.accepted);
        e.u64(a.moments.count);
        e.vec(&a.moments.mean);
        e.mat(&a.moments.m2);
        e.vec(&self.block);
        e.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SamplerError> {
        let Some(rest) = bytes.strip_prefix(CHECKPOINT_MAGIC.as_slice()) else {
            return Err(SamplerError::Checkpoint("not a checkpoint file".into()));
        };
        let mut d = Dec(rest);
        let scan = d.u64()?;
        let state = ParameterState {
            a: d.vec()?,
            h: d.vec()?,
            sigma_y: d.mat()?,
            beta: d.vec()?,
            gamma: d.vec()?,
            sigma2_t: d.f64()?,
            sigma2_h: d.f64()?,
            phi: d.f64()?,
            zeta: d.vec()?,
        };
        let main_rng = d.rng()?;
        let treatment_rng = d.rng()?;
        let adapt = AdaptiveMetropolis {
            dim: d.u64()? as usize,
            adapt_start: d.u64()?,
            scale_v: d.f64()?,
            mixture_weight: d.f64()?,
            narrow_sd: d.f64()?,
            scans: d.u64()?,
            accepted: d.u64()?,
            moments: RunningMoments { count: d.u64()?, mean: d.vec()?, m2: d.mat()? },
        };
        let block = d.vec()?;
        if !d.0.is_empty() {
            return Err(SamplerError::Checkpoint("trailing bytes after checkpoint".into()));
        }
        if adapt.moments.mean.len() != adapt.dim || block.len() != adapt.dim {
            return Err(SamplerError::Checkpoint("inconsistent checkpoint dimensions".into()));
        }
        Ok(Checkpoint { scan, state, main_rng, treatment_rng, adapt, block })
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&self.to_bytes())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self, SamplerError> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
