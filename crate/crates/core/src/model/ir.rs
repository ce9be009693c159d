use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Serializes infinite bounds as the strings `"inf"` / `"-inf"`.
mod bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad bound `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(with = "bound")]
    pub lb: f64,
    #[serde(with = "bound")]
    pub ub: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

/// `sum coeffs * x  sense  rhs`, with variables referenced by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `binary == active_value  =>  row`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicator {
    pub binary: usize,
    pub active_value: bool,
    pub row: Constraint,
}

/// Variable indices of every symbol family. Families absent from a model
/// are empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub n: usize,
    pub d: usize,
    pub pp: usize,
    pub pm: usize,
    pub f: Vec<usize>,
    pub fp: Vec<usize>,
    pub fm: Vec<usize>,
    pub e: Vec<usize>,
    /// `ap[j][r]`
    pub ap: Vec<Vec<usize>>,
    pub bp: Vec<usize>,
    pub am: Vec<Vec<usize>>,
    pub bm: Vec<usize>,
    /// `del_p[i][j]`
    pub del_p: Vec<Vec<usize>>,
    pub del_m: Vec<Vec<usize>>,
    /// `beta[i][j][k]`
    pub beta: Vec<Vec<Vec<usize>>>,
    /// `gamma[j][k]`
    pub gamma: Vec<Vec<usize>>,
    pub alpha_p: Vec<usize>,
    pub alpha_m: Vec<usize>,
    pub q: usize,
    pub q2: Option<usize>,
}

impl Catalog {
    /// All catalogued indices, for coverage checks.
    pub fn indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = Vec::new();
        v.extend(&self.f);
        v.extend(&self.fp);
        v.extend(&self.fm);
        v.extend(&self.e);
        v.extend(self.ap.iter().flatten());
        v.extend(&self.bp);
        v.extend(self.am.iter().flatten());
        v.extend(&self.bm);
        v.extend(self.del_p.iter().flatten());
        v.extend(self.del_m.iter().flatten());
        v.extend(self.beta.iter().flatten().flatten());
        v.extend(self.gamma.iter().flatten());
        v.extend(&self.alpha_p);
        v.extend(&self.alpha_m);
        v.push(self.q);
        v.extend(self.q2);
        v
    }
}

/// Solver-agnostic MILP: minimise `objective . x` subject to the rows,
/// indicator constraints and variable bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelIr {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub indicators: Vec<Indicator>,
    pub objective: Vec<(usize, f64)>,
    pub catalog: Catalog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub variables: usize,
    pub binaries: usize,
    pub continuous: usize,
    pub constraints: usize,
    pub indicators: usize,
    pub nonzeros: usize,
    /// Continuous variables with at least one finite bound.
    pub bounded: usize,
}

impl ModelIr {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            constraints: Vec::new(),
            indicators: Vec::new(),
            objective: Vec::new(),
            catalog: Catalog::default(),
        }
    }

    pub fn add_var(&mut self, name: String, lb: f64, ub: f64, kind: VarKind) -> usize {
        self.variables.push(Variable { name, lb, ub, kind });
        self.variables.len() - 1
    }

    pub fn add_row(&mut self, name: String, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint {
            name,
            coeffs,
            sense,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, v: usize, lb: f64, ub: f64) {
        self.variables[v].lb = lb;
        self.variables[v].ub = ub;
    }

    pub fn stats(&self) -> ModelStats {
        let binaries = self.variables.iter().filter(|v| v.kind == VarKind::Binary).count();
        let bounded = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Continuous && (v.lb.is_finite() || v.ub.is_finite()))
            .count();
        ModelStats {
            variables: self.variables.len(),
            binaries,
            continuous: self.variables.len() - binaries,
            constraints: self.constraints.len(),
            indicators: self.indicators.len(),
            nonzeros: self.constraints.iter().map(|c| c.coeffs.len()).sum(),
            bounded,
        }
    }

    /// Count of rows whose name starts with `prefix`.
    pub fn count_rows(&self, prefix: &str) -> usize {
        self.constraints.iter().filter(|c| c.name.starts_with(prefix)).count()
    }

    pub fn var_index(&self) -> HashMap<&str, usize> {
        self.variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Indices referenced by rows, indicators and objective all exist, names are unique.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let bad = |v: usize| v >= n;
        for c in &self.constraints {
            if c.coeffs.iter().any(|&(v, _)| bad(v)) {
                return Err(Error::Build(format!("row {} references an unknown variable", c.name)));
            }
        }
        for ind in &self.indicators {
            if bad(ind.binary) || ind.row.coeffs.iter().any(|&(v, _)| bad(v)) {
                return Err(Error::Build(format!("indicator {} references an unknown variable", ind.row.name)));
            }
            if self.variables[ind.binary].kind != VarKind::Binary {
                return Err(Error::Build(format!("indicator {} is not switched by a binary", ind.row.name)));
            }
        }
        if self.objective.iter().any(|&(v, _)| bad(v)) {
            return Err(Error::Build("objective references an unknown variable".into()));
        }
        if self.catalog.indices().into_iter().any(bad) {
            return Err(Error::Build("catalog entry does not resolve".into()));
        }
        let mut names: Vec<&str> = self.variables.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Build(format!("duplicate variable name {}", w[0])));
        }
        Ok(())
    }

    /// Largest violation of bounds, integrality, rows and indicators by `x`,
    /// with the name of the offending item.
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::new());
        let mut see = |v: f64, name: &str| {
            if v > worst.0 {
                worst = (v, name.to_string());
            }
        };
        for (i, v) in self.variables.iter().enumerate() {
            see((v.lb - x[i]).max(x[i] - v.ub).max(0.0), &v.name);
            if v.kind == VarKind::Binary {
                see((x[i] - x[i].round()).abs(), &v.name);
            }
        }
        for c in &self.constraints {
            see(c.violation(x), &c.name);
        }
        for ind in &self.indicators {
            let on = if ind.active_value { x[ind.binary] > 0.5 } else { x[ind.binary] <= 0.5 };
            if on {
                see(ind.row.violation(x), &ind.row.name);
            }
        }
        worst
    }

    /// Canonical JSON dump; identical models give identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
