//! Solver-neutral mixed-integer linear program representation.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub kind: VarKind,
}

/// `lower ≤ Σ coef·x ≤ upper`; equal bounds make an equality row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
    Range,
    Free,
}

impl Row {
    pub fn sense(&self) -> Sense {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) if self.lower == self.upper => Sense::Eq,
            (true, true) => Sense::Range,
            (false, true) => Sense::Le,
            (true, false) => Sense::Ge,
            (false, false) => Sense::Free,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|(j, a)| a * x[*j]).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Milp {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
}

impl Milp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
            kind: VarKind::Continuous,
        });
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            cost,
            kind: VarKind::Binary,
        });
        self.vars.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coefs: Vec<(usize, f64)>,
        lower: f64,
        upper: f64,
    ) -> usize {
        debug_assert!(coefs.iter().all(|(j, _)| *j < self.vars.len()));
        self.rows.push(Row {
            name: name.into(),
            coefs,
            lower,
            upper,
        });
        self.rows.len() - 1
    }

    pub fn add_eq(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(name, coefs, rhs, rhs)
    }

    pub fn add_le(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(name, coefs, f64::NEG_INFINITY, rhs)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.vars.len())
            .filter(|j| self.vars[*j].kind == VarKind::Binary)
            .collect()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum()
    }

    /// Largest bound, row or integrality violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (v, xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((xi - xi.round()).abs());
            }
        }
        for r in &self.rows {
            let a = r.activity(x);
            worst = worst.max(r.lower - a).max(a - r.upper);
        }
        worst
    }

    /// Appends all variables and rows of `other`, shifting its indices.
    /// Returns the offset of `other`'s first variable.
    pub fn append(&mut self, other: &Milp) -> usize {
        let off = self.vars.len();
        self.vars.extend(other.vars.iter().cloned());
        self.rows.extend(other.rows.iter().map(|r| Row {
            name: r.name.clone(),
            coefs: r.coefs.iter().map(|(j, a)| (j + off, *a)).collect(),
            lower: r.lower,
            upper: r.upper,
        }));
        off
    }

    /// CPLEX LP text format.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::from("\\ ppdispatch\nMinimize\n obj:");
        let mut any = false;
        for v in self.vars.iter().filter(|v| v.cost != 0.0) {
            write_term(&mut s, v.cost, &v.name);
            any = true;
        }
        if !any {
            s.push_str(" 0 ");
            s.push_str(&self.vars.first().map(|v| v.name.clone()).unwrap_or_default());
        }
        s.push_str("\nSubject To\n");
        for r in &self.rows {
            let lhs = |s: &mut String, tag: &str| {
                let _ = write!(s, " {}{}:", r.name, tag);
                if r.coefs.is_empty() {
                    s.push_str(" 0 ");
                    s.push_str(&self.vars[0].name);
                }
                for (j, a) in &r.coefs {
                    write_term(s, *a, &self.vars[*j].name);
                }
            };
            match r.sense() {
                Sense::Eq => {
                    lhs(&mut s, "");
                    let _ = writeln!(s, " = {}", r.lower);
                }
                Sense::Le => {
                    lhs(&mut s, "");
                    let _ = writeln!(s, " <= {}", r.upper);
                }
                Sense::Ge => {
                    lhs(&mut s, "");
                    let _ = writeln!(s, " >= {}", r.lower);
                }
                Sense::Range => {
                    lhs(&mut s, "_lo");
                    let _ = writeln!(s, " >= {}", r.lower);
                    lhs(&mut s, "_hi");
                    let _ = writeln!(s, " <= {}", r.upper);
                }
                Sense::Free => {}
            }
        }
        s.push_str("Bounds\n");
        for v in self.vars.iter().filter(|v| v.kind == VarKind::Continuous) {
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(s, " {} free", v.name);
                }
                (true, true) if v.lower == v.upper => {
                    let _ = writeln!(s, " {} = {}", v.name, v.lower);
                }
                (true, true) => {
                    let _ = writeln!(s, " {} <= {} <= {}", v.lower, v.name, v.upper);
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= {} <= {}", v.name, v.upper);
                }
                (true, false) => {
                    let _ = writeln!(s, " {} >= {}", v.name, v.lower);
                }
            }
        }
        let bins: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !bins.is_empty() {
            s.push_str("Binaries\n");
            for b in bins {
                let _ = writeln!(s, " {b}");
            }
        }
        s.push_str("End\n");
        s
    }

    /// Sparse dump: one `row,col,coef` line per nonzero, then one
    /// `row,sense,lower,upper` line per row.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,coef")?;
        for (i, r) in self.rows.iter().enumerate() {
            for (j, a) in &r.coefs {
                writeln!(w, "{i},{j},{a}")?;
            }
        }
        writeln!(w, "row,sense,lower,upper")?;
        for (i, r) in self.rows.iter().enumerate() {
            let sense = match r.sense() {
                Sense::Eq => "E",
                Sense::Le => "L",
                Sense::Ge => "G",
                Sense::Range => "R",
                Sense::Free => "N",
            };
            writeln!(w, "{i},{sense},{},{}", r.lower, r.upper)?;
        }
        Ok(())
    }

    pub fn check_indices(&self) -> Result<()> {
        for r in &self.rows {
            if let Some((j, _)) = r.coefs.iter().find(|(j, _)| *j >= self.vars.len()) {
                return Err(Error::InvalidModel(format!(
                    "row {} references undeclared variable {j}",
                    r.name
                )));
            }
        }
        Ok(())
    }
}

fn write_term(s: &mut String, a: f64, name: &str) {
    if a < 0.0 {
        let _ = write!(s, " - {} {}", -a, name);
    } else {
        let _ = write!(s, " + {} {}", a, name);
    }
}
