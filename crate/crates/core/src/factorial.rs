//! Coded two-level designs, effect-forced factor models and model matrices.
//!
//! Coding is fixed at ±1. A model is identified by its set of active
//! factors; its terms are every main effect and every interaction among the
//! active factors up to the interaction order of the [`FactorSpace`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

pub const MAX_FACTORS: usize = 16;

/// Relative singular-value tolerance used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InteractionOrder {
    Two,
    Three,
}

impl InteractionOrder {
    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            other => Err(Error::InvalidSpace(format!(
                "interaction order must be 2 or 3, got {other}"
            ))),
        }
    }

    pub fn max_order(self) -> usize {
        match self {
            Self::Two => 2,
            Self::Three => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSpace {
    names: Vec<String>,
    order: InteractionOrder,
}

impl FactorSpace {
    pub fn new(names: Vec<String>, order: InteractionOrder) -> Result<Self> {
        let k = names.len();
        if k == 0 || k > MAX_FACTORS {
            return Err(Error::InvalidSpace(format!(
                "factor count must be in 1..={MAX_FACTORS}, got {k}"
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::InvalidSpace(format!("factor {} has an empty name", i + 1)));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidSpace(format!("duplicate factor name {name:?}")));
            }
        }
        Ok(Self { names, order })
    }

    /// Factors named `A`, `B`, `C`, ...
    pub fn with_letters(k: usize, order: InteractionOrder) -> Result<Self> {
        if k == 0 || k > MAX_FACTORS {
            return Err(Error::InvalidSpace(format!(
                "factor count must be in 1..={MAX_FACTORS}, got {k}"
            )));
        }
        let names = (0..k)
            .map(|i| char::from(b'A' + i as u8).to_string())
            .collect();
        Self::new(names, order)
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn order(&self) -> InteractionOrder {
        self.order
    }

    pub fn with_order(&self, order: InteractionOrder) -> Self {
        Self {
            names: self.names.clone(),
            order,
        }
    }

    /// Number of factor subsets, `2^k`.
    pub fn model_count(&self) -> u64 {
        1u64 << self.k()
    }

    fn short_names(&self) -> bool {
        self.names.iter().all(|n| n.chars().count() == 1)
    }

    pub fn term_label(&self, term: &Term) -> String {
        let parts: Vec<&str> = term
            .factors()
            .iter()
            .map(|&f| self.names[f as usize].as_str())
            .collect();
        if self.short_names() {
            parts.concat()
        } else {
            parts.join(":")
        }
    }
}

/// A main effect or interaction: 1–3 strictly increasing factor indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    len: u8,
    idx: [u8; 3],
}

impl Term {
    pub fn new(factors: &[usize]) -> Result<Self> {
        if factors.is_empty() || factors.len() > 3 {
            return Err(Error::InvalidSpace(format!(
                "a term has 1 to 3 factors, got {}",
                factors.len()
            )));
        }
        let mut idx = [0u8; 3];
        for (i, &f) in factors.iter().enumerate() {
            if f >= MAX_FACTORS || (i > 0 && factors[i - 1] >= f) {
                return Err(Error::InvalidSpace(format!(
                    "term factors must be strictly increasing and < {MAX_FACTORS}: {factors:?}"
                )));
            }
            idx[i] = f as u8;
        }
        Ok(Self {
            len: factors.len() as u8,
            idx,
        })
    }

    pub fn factors(&self) -> &[u8] {
        &self.idx[..self.len as usize]
    }

    pub fn order(&self) -> usize {
        self.len as usize
    }

    /// Product of the coded levels of this term's factors in one run.
    #[inline]
    pub fn sign(&self, run: &[i8]) -> i8 {
        self.factors().iter().fold(1i8, |acc, &f| acc * run[f as usize])
    }
}

/// Active-factor set plus the concrete term list it expands to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactorModel {
    active: u32,
    terms: Vec<Term>,
}

impl FactorModel {
    pub fn null() -> Self {
        Self {
            active: 0,
            terms: Vec::new(),
        }
    }

    /// Every main effect, then pairs, then (order 3) triples of the active
    /// factors, each group in lexicographic order.
    pub fn effect_forced(active: u32, order: InteractionOrder) -> Self {
        let factors: Vec<usize> = (0..32).filter(|i| active & (1 << i) != 0).collect();
        let f = factors.len();
        let mut terms = Vec::new();
        for &a in &factors {
            terms.push(Term::new(&[a]).expect("main effect"));
        }
        for i in 0..f {
            for j in i + 1..f {
                terms.push(Term::new(&[factors[i], factors[j]]).expect("pair"));
            }
        }
        if order == InteractionOrder::Three {
            for i in 0..f {
                for j in i + 1..f {
                    for l in j + 1..f {
                        terms.push(
                            Term::new(&[factors[i], factors[j], factors[l]]).expect("triple"),
                        );
                    }
                }
            }
        }
        Self { active, terms }
    }

    pub fn from_factors(factors: &[usize], order: InteractionOrder) -> Self {
        let mask = factors.iter().fold(0u32, |m, &f| m | (1 << f));
        Self::effect_forced(mask, order)
    }

    /// Drops every interaction whose coded column on `design` equals, up to
    /// sign, the column of an earlier kept term. Main effects are kept.
    pub fn prune_aliased(&self, design: &DesignTable) -> Self {
        let n = design.n();
        let mut kept: Vec<Term> = Vec::with_capacity(self.terms.len());
        let mut columns: Vec<Vec<i8>> = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let col: Vec<i8> = (0..n).map(|r| term.sign(design.run(r))).collect();
            if term.order() > 1 {
                let duplicate = columns.iter().any(|c| {
                    c.iter().zip(&col).all(|(x, y)| x == y)
                        || c.iter().zip(&col).all(|(x, y)| *x == -*y)
                });
                if duplicate {
                    continue;
                }
            }
            kept.push(*term);
            columns.push(col);
        }
        Self {
            active: self.active,
            terms: kept,
        }
    }

    pub fn active_mask(&self) -> u32 {
        self.active
    }

    pub fn active_factors(&self) -> impl Iterator<Item = usize> + '_ {
        (0..32).filter(move |i| self.active & (1 << i) != 0)
    }

    pub fn contains(&self, factor: usize) -> bool {
        factor < 32 && self.active & (1 << factor) != 0
    }

    /// Number of active factors.
    pub fn f(&self) -> usize {
        self.active.count_ones() as usize
    }

    /// Number of model-specific terms.
    pub fn t(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_null(&self) -> bool {
        self.active == 0
    }

    /// `"null"` or the comma-separated active factor names.
    pub fn label(&self, space: &FactorSpace) -> String {
        if self.is_null() {
            return "null".to_string();
        }
        let names: Vec<&str> = self
            .active_factors()
            .map(|f| space.names()[f].as_str())
            .collect();
        names.join(",")
    }
}

/// Two block labels and the ±1 code of each run.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    labels: [String; 2],
    codes: Vec<i8>,
}

impl Block {
    /// Codes labels ±1 by order of first appearance.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut distinct: Vec<&str> = Vec::new();
        for l in labels {
            if !distinct.contains(&l.as_ref()) {
                distinct.push(l.as_ref());
            }
        }
        if distinct.len() != 2 {
            return Err(Error::InvalidDesign(format!(
                "block column must have exactly two distinct labels, found {}",
                distinct.len()
            )));
        }
        let codes = labels
            .iter()
            .map(|l| if l.as_ref() == distinct[0] { -1 } else { 1 })
            .collect();
        Ok(Self {
            labels: [distinct[0].to_string(), distinct[1].to_string()],
            codes,
        })
    }

    pub fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    pub fn codes(&self) -> &[i8] {
        &self.codes
    }
}

/// Coded ±1 run matrix with responses and an optional two-level block.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    k: usize,
    runs: Vec<i8>,
    y: Vec<f64>,
    block: Option<Block>,
}

impl DesignTable {
    /// `runs` is row-major `n × k`.
    pub fn new(k: usize, runs: Vec<i8>, y: Vec<f64>, block: Option<Block>) -> Result<Self> {
        if k == 0 || k > MAX_FACTORS {
            return Err(Error::InvalidDesign(format!(
                "factor count must be in 1..={MAX_FACTORS}, got {k}"
            )));
        }
        if !runs.len().is_multiple_of(k) {
            return Err(Error::InvalidDesign(format!(
                "run matrix has {} cells, not a multiple of k = {k}",
                runs.len()
            )));
        }
        let n = runs.len() / k;
        if let Some(pos) = runs.iter().position(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidDesign(format!(
                "run {} factor {} has level {}, expected -1 or +1",
                pos / k + 1,
                pos % k + 1,
                runs[pos]
            )));
        }
        if y.len() != n {
            return Err(Error::InvalidDesign(format!(
                "{} responses for {n} runs",
                y.len()
            )));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign(format!(
                "response of run {} is not finite",
                pos + 1
            )));
        }
        if let Some(b) = &block {
            if b.codes.len() != n {
                return Err(Error::InvalidDesign(format!(
                    "{} block labels for {n} runs",
                    b.codes.len()
                )));
            }
        }
        Ok(Self { k, runs, y, block })
    }

    pub fn from_rows(rows: &[Vec<i8>], y: Vec<f64>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidDesign("ragged run matrix".to_string()));
        }
        Self::new(k, rows.concat(), y, None)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn run(&self, i: usize) -> &[i8] {
        &self.runs[i * self.k..(i + 1) * self.k]
    }

    pub fn runs(&self) -> impl Iterator<Item = &[i8]> {
        self.runs.chunks_exact(self.k)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn block(&self) -> Option<&Block> {
        self.block.as_ref()
    }

    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.k, self.runs.clone(), y, self.block.clone())
    }

    pub fn with_block(&self, block: Option<Block>) -> Result<Self> {
        Self::new(self.k, self.runs.clone(), self.y.clone(), block)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut runs = Vec::with_capacity(rows.len() * self.k);
        let mut y = Vec::with_capacity(rows.len());
        let mut labels = Vec::new();
        for &r in rows {
            if r >= self.n() {
                return Err(Error::InvalidDesign(format!("row {r} out of range")));
            }
            runs.extend_from_slice(self.run(r));
            y.push(self.y[r]);
            if let Some(b) = &self.block {
                labels.push(b.labels[usize::from(b.codes[r] > 0)].clone());
            }
        }
        let block = match &self.block {
            Some(_) => Block::from_labels(&labels).ok(),
            None => None,
        };
        Self::new(self.k, runs, y, block)
    }

    /// Stacks `self` over `other`, tagging each part with its block label.
    pub fn concat_blocked(&self, other: &Self, labels: [&str; 2]) -> Result<Self> {
        if self.k != other.k {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack designs with {} and {} factors",
                self.k, other.k
            )));
        }
        let mut runs = self.runs.clone();
        runs.extend_from_slice(&other.runs);
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        let mut tags: Vec<&str> = Vec::with_capacity(y.len());
        tags.extend(std::iter::repeat_n(labels[0], self.n()));
        tags.extend(std::iter::repeat_n(labels[1], other.n()));
        Self::new(self.k, runs, y, Some(Block::from_labels(&tags)?))
    }

    /// True when every one of the `2^k` level combinations appears exactly once.
    pub fn is_full_factorial(&self) -> bool {
        if self.k >= 31 || self.n() != 1usize << self.k {
            return false;
        }
        let mut seen = alloc::vec![false; self.n()];
        for run in self.runs() {
            let idx = yates_index(run);
            if seen[idx] {
                return false;
            }
            seen[idx] = true;
        }
        true
    }
}

/// Zero-based standard-order index of a coded run (first factor fastest).
pub fn yates_index(run: &[i8]) -> usize {
    run.iter()
        .enumerate()
        .fold(0usize, |acc, (j, &v)| if v > 0 { acc | (1 << j) } else { acc })
}

/// `[X0 Xi]` for one model on one design.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrix {
    x0: DMatrix<f64>,
    xi: DMatrix<f64>,
    rank: usize,
    rank_ok: bool,
}

impl ModelMatrix {
    pub fn x0(&self) -> &DMatrix<f64> {
        &self.x0
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn n(&self) -> usize {
        self.x0.nrows()
    }

    pub fn t0(&self) -> usize {
        self.x0.ncols()
    }

    pub fn t(&self) -> usize {
        self.xi.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Residual degrees of freedom `n - t0 - t` (may be negative).
    pub fn df(&self) -> isize {
        self.n() as isize - self.t0() as isize - self.t() as isize
    }

    pub fn rank_ok(&self) -> bool {
        self.rank_ok
    }

    /// Horizontal concatenation `[X0 Xi]`.
    pub fn z(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut z = DMatrix::zeros(n, self.t0() + self.t());
        z.columns_mut(0, self.t0()).copy_from(&self.x0);
        z.columns_mut(self.t0(), self.t()).copy_from(&self.xi);
        z
    }
}

/// Common columns: intercept, plus the ±1 block column when requested.
pub fn common_columns(design: &DesignTable, with_block: bool) -> Result<DMatrix<f64>> {
    let n = design.n();
    if !with_block {
        return Ok(DMatrix::from_element(n, 1, 1.0));
    }
    let block = design.block().ok_or_else(|| {
        Error::InvalidDesign("block effect requested but the design has no block column".into())
    })?;
    Ok(DMatrix::from_fn(n, 2, |r, c| {
        if c == 0 {
            1.0
        } else {
            f64::from(block.codes()[r])
        }
    }))
}

pub fn build_model_matrix(
    design: &DesignTable,
    model: &FactorModel,
    with_block: bool,
) -> Result<ModelMatrix> {
    if let Some(bad) = model.active_factors().find(|&f| f >= design.k()) {
        return Err(Error::DimensionMismatch(format!(
            "model uses factor {} but the design has {} factors",
            bad + 1,
            design.k()
        )));
    }
    let x0 = common_columns(design, with_block)?;
    let n = design.n();
    let xi = DMatrix::from_fn(n, model.t(), |r, c| f64::from(model.terms()[c].sign(design.run(r))));
    let width = x0.ncols() + xi.ncols();
    let mut z = DMatrix::zeros(n, width);
    z.columns_mut(0, x0.ncols()).copy_from(&x0);
    z.columns_mut(x0.ncols(), xi.ncols()).copy_from(&xi);
    let rank = linalg::rank(&z, RANK_TOL);
    let rank_ok = rank == width && n > width;
    Ok(ModelMatrix {
        x0,
        xi,
        rank,
        rank_ok,
    })
}

/// How aliased interaction columns are treated when the model space is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AliasPolicy {
    /// Drop interactions that duplicate (±) an earlier kept term column,
    /// then require full rank and positive residual df.
    #[default]
    Prune,
    /// Keep the full effect-forced term list; rank-deficient models are
    /// dropped whole.
    Strict,
}

/// Admissible models with their matrices, plus the factor sets that were dropped.
#[derive(Debug, Clone)]
pub struct ModelEnumeration {
    pub admissible: Vec<(FactorModel, ModelMatrix)>,
    pub rejected: Vec<FactorModel>,
}

/// Subset masks of `0..k` ordered by size, then lexicographically.
pub fn subsets_by_size(k: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(1 << k);
    for f in 0..=k {
        let mut idx: Vec<usize> = (0..f).collect();
        loop {
            out.push(idx.iter().fold(0u32, |m, &i| m | (1 << i)));
            // next f-combination of 0..k in lexicographic order
            let mut pos = f;
            while pos > 0 && idx[pos - 1] == k - f + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for j in pos..f {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

pub fn enumerate_models(
    space: &FactorSpace,
    design: &DesignTable,
    with_block: bool,
    policy: AliasPolicy,
) -> Result<ModelEnumeration> {
    if design.k() != space.k() {
        return Err(Error::DimensionMismatch(format!(
            "factor space has {} factors, design has {}",
            space.k(),
            design.k()
        )));
    }
    let mut admissible = Vec::new();
    let mut rejected = Vec::new();
    for mask in subsets_by_size(space.k()) {
        let forced = FactorModel::effect_forced(mask, space.order());
        let model = match policy {
            AliasPolicy::Prune => forced.prune_aliased(design),
            AliasPolicy::Strict => forced,
        };
        let mm = build_model_matrix(design, &model, with_block)?;
        if mm.rank_ok() {
            admissible.push((model, mm));
        } else {
            rejected.push(model);
        }
    }
    if admissible.first().is_none_or(|(m, _)| !m.is_null()) {
        return Err(Error::Degenerate(
            "the null model is not estimable on this design".to_string(),
        ));
    }
    Ok(ModelEnumeration {
        admissible,
        rejected,
    })
}

/// Full-factorial candidate runs in standard order; run number = row + 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateTable {
    k: usize,
    rows: Vec<i8>,
}

impl CandidateTable {
    /// User-supplied candidate rows, numbered 1.. in the given order.
    pub fn from_rows(k: usize, rows: Vec<i8>) -> Result<Self> {
        if k == 0 || rows.is_empty() || !rows.len().is_multiple_of(k) {
            return Err(Error::InvalidDesign(
                "candidate table must be a nonempty n × k matrix".to_string(),
            ));
        }
        if rows.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidDesign(
                "candidate table entries must be -1 or +1".to_string(),
            ));
        }
        Ok(Self { k, rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Coded levels of the run with 1-based number `run`.
    pub fn run(&self, run: usize) -> &[i8] {
        let i = run - 1;
        &self.rows[i * self.k..(i + 1) * self.k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i8]> {
        self.rows.chunks_exact(self.k)
    }

    /// 1-based number of the candidate equal to `levels`, if any.
    pub fn find(&self, levels: &[i8]) -> Option<usize> {
        self.iter().position(|r| r == levels).map(|i| i + 1)
    }
}

/// The `2^k` full-factorial runs, first factor alternating fastest.
pub fn enumerate_candidate_runs(space: &FactorSpace) -> CandidateTable {
    let k = space.k();
    let count = 1usize << k;
    let mut rows = Vec::with_capacity(count * k);
    for r in 0..count {
        for j in 0..k {
            rows.push(if r & (1 << j) != 0 { 1 } else { -1 });
        }
    }
    CandidateTable { k, rows }
}
