//! Convex programs in standard conic form and the interior-point backend.
//!
//! `minimize c'z  s.t.  G z + s = h,  s in K` where `K` is a product of zero
//! cones, nonnegative orthants and second-order cones. The solve is delegated
//! to Clarabel (primal-dual IPM, Nesterov-Todd scaling, homogeneous embedding).

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::ops::Range;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero(usize),
    NonNeg(usize),
    /// `(t, x)` with `t >= |x|_2`; the dimension includes `t`.
    Soc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::Soc(n) => n,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::NonNeg(_) => "nonneg",
            Cone::Soc(_) => "soc",
        }
    }

    fn code(&self) -> u8 {
        match self {
            Cone::Zero(_) => 0,
            Cone::NonNeg(_) => 1,
            Cone::Soc(_) => 2,
        }
    }

    fn from_parts(tag: &str, dim: usize) -> Result<Self> {
        match tag {
            "zero" | "0" => Ok(Cone::Zero(dim)),
            "nonneg" | "1" => Ok(Cone::NonNeg(dim)),
            "soc" | "2" => Ok(Cone::Soc(dim)),
            other => Err(Error::MalformedProgram(format!("unknown cone kind {other:?}"))),
        }
    }
}

/// Affine expression `sum coef * z[col] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn var(col: usize) -> Self {
        Affine { terms: vec![(col, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, col: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((col, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * z[j]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub g_rows: Vec<usize>,
    pub g_cols: Vec<usize>,
    pub g_vals: Vec<f64>,
    pub h: Vec<f64>,
    pub cones: Vec<Cone>,
    pub var_names: Vec<String>,
}

impl ConeProgram {
    pub fn with_vars(n: usize) -> Self {
        ConeProgram { c: vec![0.0; n], ..Default::default() }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.h.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        if self.var_names.len() == self.c.len() {
            self.var_names.push(name.into());
        }
        self.c.push(0.0);
        self.c.len() - 1
    }

    /// Appends a cone block requiring `(e_0, ..., e_{n-1}) in K`.
    /// Returns the row range occupied by the block.
    pub fn push_cone(&mut self, kind: fn(usize) -> Cone, exprs: &[Affine]) -> Range<usize> {
        let start = self.h.len();
        for (k, e) in exprs.iter().enumerate() {
            // s = h - G z = e(z)  =>  G = -a, h = b
            for &(j, a) in &e.terms {
                self.g_rows.push(start + k);
                self.g_cols.push(j);
                self.g_vals.push(-a);
            }
            self.h.push(e.constant);
        }
        self.cones.push(kind(exprs.len()));
        start..self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_rows();
        let n = self.n_vars();
        let total: usize = self.cones.iter().map(Cone::dim).sum();
        if total != m {
            return Err(Error::MalformedProgram(format!("cone dims sum to {total}, G has {m} rows")));
        }
        if self.g_rows.len() != self.g_cols.len() || self.g_rows.len() != self.g_vals.len() {
            return Err(Error::MalformedProgram("triplet arrays differ in length".into()));
        }
        if self.g_rows.iter().any(|&i| i >= m) || self.g_cols.iter().any(|&j| j >= n) {
            return Err(Error::MalformedProgram("triplet index out of range".into()));
        }
        if self.cones.iter().any(|c| matches!(c, Cone::Soc(d) if *d < 2)) || self.cones.iter().any(|c| c.dim() == 0)
        {
            return Err(Error::MalformedProgram("empty cone or second-order cone of dimension < 2".into()));
        }
        let finite = self.c.iter().chain(&self.h).chain(&self.g_vals).all(|v| v.is_finite());
        if !finite {
            return Err(Error::MalformedProgram("non-finite data".into()));
        }
        // Equality rows without any variable are either vacuous or infeasible.
        let mut has_entry = vec![false; m];
        for (&i, &v) in self.g_rows.iter().zip(&self.g_vals) {
            if v != 0.0 {
                has_entry[i] = true;
            }
        }
        let mut row = 0;
        for cone in &self.cones {
            if let Cone::Zero(d) = cone {
                if let Some(k) = (row..row + d).find(|&k| !has_entry[k]) {
                    return Err(Error::MalformedProgram(format!("equality row {k} has no coefficients")));
                }
            }
            row += cone.dim();
        }
        Ok(())
    }

    /// Row ranges of the cone blocks, in order.
    pub fn cone_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.cones.len());
        let mut start = 0;
        for c in &self.cones {
            out.push(start..start + c.dim());
            start += c.dim();
        }
        out
    }

    /// `h - G z`.
    pub fn slack(&self, z: &[f64]) -> Vec<f64> {
        let mut s = self.h.clone();
        for ((&i, &j), &v) in self.g_rows.iter().zip(&self.g_cols).zip(&self.g_vals) {
            s[i] -= v * z[j];
        }
        s
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        self.c.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    /// Documented sparse text form:
    ///
    /// ```text
    /// coneprog 1
    /// vars <n> rows <m> nnz <k>
    /// cones <count>
    /// <kind> <dim>          (kind: zero | nonneg | soc), one line per cone
    /// c
    /// <n values>
    /// h
    /// <m values>
    /// G
    /// <row> <col> <value>   (k lines, zero-based)
    /// names <count>
    /// <name>                (optional column labels)
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "coneprog 1");
        let _ = writeln!(out, "vars {} rows {} nnz {}", self.n_vars(), self.n_rows(), self.g_vals.len());
        let _ = writeln!(out, "cones {}", self.cones.len());
        for c in &self.cones {
            let _ = writeln!(out, "{} {}", c.tag(), c.dim());
        }
        let _ = writeln!(out, "c");
        for v in &self.c {
            let _ = writeln!(out, "{v:?}");
        }
        let _ = writeln!(out, "h");
        for v in &self.h {
            let _ = writeln!(out, "{v:?}");
        }
        let _ = writeln!(out, "G");
        for k in 0..self.g_vals.len() {
            let _ = writeln!(out, "{} {} {:?}", self.g_rows[k], self.g_cols[k], self.g_vals[k]);
        }
        let _ = writeln!(out, "names {}", self.var_names.len());
        for name in &self.var_names {
            let _ = writeln!(out, "{name}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::MalformedProgram(msg);
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines
                .next()
                .map(|(no, l)| (no + 1, l.split_whitespace().collect()))
                .ok_or_else(|| bad(format!("unexpected end of input, expected {what}")))
        };
        let parse_usize = |no: usize, tok: &str| -> Result<usize> {
            tok.parse().map_err(|_| bad(format!("line {no}: expected integer, got {tok:?}")))
        };
        let parse_f64 = |no: usize, tok: &str| -> Result<f64> {
            tok.parse().map_err(|_| bad(format!("line {no}: expected number, got {tok:?}")))
        };
        let (no, head) = next("header")?;
        if head.first() != Some(&"coneprog") {
            return Err(bad(format!("line {no}: missing coneprog header")));
        }
        let (no, dims) = next("dimensions")?;
        if dims.len() != 6 {
            return Err(bad(format!("line {no}: expected `vars n rows m nnz k`")));
        }
        let (n, m, nnz) = (parse_usize(no, dims[1])?, parse_usize(no, dims[3])?, parse_usize(no, dims[5])?);
        let (no, cl) = next("cone count")?;
        let n_cones = parse_usize(no, cl.get(1).copied().unwrap_or(""))?;
        let mut prog = ConeProgram::default();
        for _ in 0..n_cones {
            let (no, parts) = next("cone")?;
            if parts.len() != 2 {
                return Err(bad(format!("line {no}: expected `<kind> <dim>`")));
            }
            prog.cones.push(Cone::from_parts(parts[0], parse_usize(no, parts[1])?)?);
        }
        next("c")?;
        for _ in 0..n {
            let (no, p) = next("c value")?;
            prog.c.push(parse_f64(no, p.first().copied().unwrap_or(""))?);
        }
        next("h")?;
        for _ in 0..m {
            let (no, p) = next("h value")?;
            prog.h.push(parse_f64(no, p.first().copied().unwrap_or(""))?);
        }
        next("G")?;
        for _ in 0..nnz {
            let (no, p) = next("triplet")?;
            if p.len() != 3 {
                return Err(bad(format!("line {no}: expected `<row> <col> <value>`")));
            }
            prog.g_rows.push(parse_usize(no, p[0])?);
            prog.g_cols.push(parse_usize(no, p[1])?);
            prog.g_vals.push(parse_f64(no, p[2])?);
        }
        if let Ok((no, p)) = next("names") {
            let count = parse_usize(no, p.get(1).copied().unwrap_or(""))?;
            for _ in 0..count {
                let (_, p) = next("name")?;
                prog.var_names.push(p.join(" "));
            }
        }
        prog.validate()?;
        Ok(prog)
    }

    /// Little-endian binary variant: `b"TSCP"`, u32 version, u64 n, m, nnz,
    /// u32 cone count, per cone (u8 kind, u64 dim), then f64 `c`, f64 `h`, and
    /// `nnz` triplets of (u64 row, u64 col, f64 value). Names are not stored.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"TSCP")?;
        out.write_all(&1u32.to_le_bytes())?;
        for v in [self.n_vars(), self.n_rows(), self.g_vals.len()] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        out.write_all(&(self.cones.len() as u32).to_le_bytes())?;
        for c in &self.cones {
            out.write_all(&[c.code()])?;
            out.write_all(&(c.dim() as u64).to_le_bytes())?;
        }
        for v in self.c.iter().chain(&self.h) {
            out.write_all(&v.to_le_bytes())?;
        }
        for k in 0..self.g_vals.len() {
            out.write_all(&(self.g_rows[k] as u64).to_le_bytes())?;
            out.write_all(&(self.g_cols[k] as u64).to_le_bytes())?;
            out.write_all(&self.g_vals[k].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        fn take<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
            let mut buf = [0u8; K];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        let u64_ = |r: &mut R| -> Result<usize> { Ok(u64::from_le_bytes(take::<8, R>(r)?) as usize) };
        let f64_ = |r: &mut R| -> Result<f64> { Ok(f64::from_le_bytes(take::<8, R>(r)?)) };
        if &take::<4, R>(&mut input)? != b"TSCP" {
            return Err(Error::MalformedProgram("bad magic".into()));
        }
        let version = u32::from_le_bytes(take::<4, R>(&mut input)?);
        if version != 1 {
            return Err(Error::MalformedProgram(format!("unsupported version {version}")));
        }
        let (n, m, nnz) = (u64_(&mut input)?, u64_(&mut input)?, u64_(&mut input)?);
        let n_cones = u32::from_le_bytes(take::<4, R>(&mut input)?) as usize;
        let mut prog = ConeProgram::default();
        for _ in 0..n_cones {
            let code = take::<1, R>(&mut input)?[0];
            let dim = u64_(&mut input)?;
            prog.cones.push(Cone::from_parts(&code.to_string(), dim)?);
        }
        prog.c = (0..n).map(|_| f64_(&mut input)).collect::<Result<_>>()?;
        prog.h = (0..m).map(|_| f64_(&mut input)).collect::<Result<_>>()?;
        for _ in 0..nnz {
            prog.g_rows.push(u64_(&mut input)?);
            prog.g_cols.push(u64_(&mut input)?);
            prog.g_vals.push(f64_(&mut input)?);
        }
        prog.validate()?;
        Ok(prog)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeStatus {
    Optimal,
    /// Converged to the solver's reduced tolerances only.
    Inaccurate,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub z: Vec<f64>,
    /// Dual multipliers; lie in the dual cone.
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub status: ConeStatus,
    pub objective: f64,
    pub gap: f64,
    pub iters: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl ConeSolution {
    pub fn is_usable(&self) -> bool {
        matches!(self.status, ConeStatus::Optimal | ConeStatus::Inaccurate)
    }
}

/// Solves the program with relative/absolute tolerance `tol` and at most `maxit` iterations.
pub fn solve(prog: &ConeProgram, tol: f64, maxit: u32) -> Result<ConeSolution> {
    prog.validate()?;
    let (n, m) = (prog.n_vars(), prog.n_rows());
    let p = CscMatrix::<f64>::zeros((n, n));
    let a = CscMatrix::new_from_triplets(m, n, prog.g_rows.clone(), prog.g_cols.clone(), prog.g_vals.clone());
    let cones: Vec<SupportedConeT<f64>> = prog
        .cones
        .iter()
        .map(|c| match *c {
            Cone::Zero(d) => SupportedConeT::ZeroConeT(d),
            Cone::NonNeg(d) => SupportedConeT::NonnegativeConeT(d),
            Cone::Soc(d) => SupportedConeT::SecondOrderConeT(d),
        })
        .collect();
    let settings = DefaultSettings {
        max_iter: maxit,
        tol_gap_abs: tol,
        tol_gap_rel: tol,
        tol_feas: tol,
        verbose: false,
        max_threads: 1,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &prog.c, &a, &prog.h, &cones, settings)
        .map_err(|e| Error::MalformedProgram(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => ConeStatus::Optimal,
        SolverStatus::AlmostSolved => ConeStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConeStatus::PrimalInfeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConeStatus::DualInfeasible,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => ConeStatus::MaxIter,
        SolverStatus::NumericalError => {
            return Err(Error::IllConditioned(format!("KKT factorization failed after {} iterations", sol.iterations)))
        }
        other => return Err(Error::NumericalError(format!("{other:?}"))),
    };
    let finite = sol.x.iter().chain(&sol.z).chain(&sol.s).all(|v| v.is_finite());
    if !finite {
        return Err(Error::NumericalError("non-finite iterate".into()));
    }
    Ok(ConeSolution {
        z: sol.x.clone(),
        y: sol.z.clone(),
        s: sol.s.clone(),
        status,
        objective: sol.obj_val,
        gap: (sol.obj_val - sol.obj_val_dual).abs(),
        iters: sol.iterations,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
    })
}

/// Flags each row group as active when its multiplier reaches `dual_threshold`
/// or its slack falls within `slack_tol`.
///
/// A single-row range is read as a nonnegative row (`y >= thr` or `s <= tol`).
/// A longer range is read as a second-order cone block, using the head
/// multiplier and the cone distance `s_0 - |s_1:|`.
pub fn dual_activity(
    sol: &ConeSolution,
    row_ranges: &[Range<usize>],
    dual_threshold: f64,
    slack_tol: f64,
) -> Result<Vec<bool>> {
    if !sol.is_usable() {
        return Err(Error::NotOptimal(format!("{:?}", sol.status)));
    }
    Ok(row_ranges
        .iter()
        .map(|r| {
            if r.len() == 1 {
                sol.y[r.start] >= dual_threshold || sol.s[r.start] <= slack_tol
            } else {
                let tail: f64 = sol.s[r.start + 1..r.end].iter().map(|v| v * v).sum::<f64>().sqrt();
                sol.y[r.start] >= dual_threshold || sol.s[r.start] - tail <= slack_tol
            }
        })
        .collect())
}
