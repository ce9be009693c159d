use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub eps: f64,
    pub pp: usize,
    pub pm: usize,
}

impl FitParams {
    pub fn new(eps: f64, pp: usize, pm: usize) -> Result<Self> {
        let p = Self { eps, pp, pm };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Validation(format!("eps must be finite and >= 0, got {}", self.eps)));
        }
        if self.pp == 0 || self.pm == 0 {
            return Err(Error::Validation("piece counts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMeasure {
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceCount {
    /// Pieces of `f`, i.e. nonempty `(j, k)` pairs.
    F,
    FPlus,
    FMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxError,
    MeanError,
    PieceCountF,
    PieceCountFplus,
    PieceCountFminus,
    /// `pieces + error / (2 eps)`.
    Hierarchical { count: PieceCount, error: ErrorMeasure },
}

impl Objective {
    pub fn piece_count(self) -> Option<PieceCount> {
        match self {
            Objective::PieceCountF => Some(PieceCount::F),
            Objective::PieceCountFplus => Some(PieceCount::FPlus),
            Objective::PieceCountFminus => Some(PieceCount::FMinus),
            Objective::Hierarchical { count, .. } => Some(count),
            Objective::MaxError | Objective::MeanError => None,
        }
    }

    pub fn error_measure(self) -> Option<ErrorMeasure> {
        match self {
            Objective::MaxError => Some(ErrorMeasure::Max),
            Objective::MeanError => Some(ErrorMeasure::Mean),
            Objective::Hierarchical { error, .. } => Some(error),
            _ => None,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let count = |c: PieceCount| match c {
            PieceCount::F => "pieces-f",
            PieceCount::FPlus => "pieces-fplus",
            PieceCount::FMinus => "pieces-fminus",
        };
        match self {
            Objective::MaxError => f.write_str("max-error"),
            Objective::MeanError => f.write_str("mean-error"),
            Objective::PieceCountF => f.write_str(count(PieceCount::F)),
            Objective::PieceCountFplus => f.write_str(count(PieceCount::FPlus)),
            Objective::PieceCountFminus => f.write_str(count(PieceCount::FMinus)),
            Objective::Hierarchical { count: c, error } => {
                let e = match error {
                    ErrorMeasure::Max => "max-error",
                    ErrorMeasure::Mean => "mean-error",
                };
                write!(f, "hier:{}:{e}", count(*c))
            }
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let count = |t: &str| match t {
            "pieces-f" => Some(PieceCount::F),
            "pieces-fplus" => Some(PieceCount::FPlus),
            "pieces-fminus" => Some(PieceCount::FMinus),
            _ => None,
        };
        let bad = || Error::Validation(format!("unknown objective `{s}`"));
        Ok(match s {
            "max-error" => Objective::MaxError,
            "mean-error" => Objective::MeanError,
            "pieces-f" => Objective::PieceCountF,
            "pieces-fplus" => Objective::PieceCountFplus,
            "pieces-fminus" => Objective::PieceCountFminus,
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["hier", c, e] => Objective::Hierarchical {
                        count: count(c).ok_or_else(bad)?,
                        error: match *e {
                            "max-error" => ErrorMeasure::Max,
                            "mean-error" => ErrorMeasure::Mean,
                            _ => return Err(bad()),
                        },
                    },
                    _ => return Err(bad()),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointsPerPiece {
    None,
    /// At least `d+1` points per piece of `f^+` and of `f^-`.
    PerConvexPart,
    /// At least `d+1` points per nonempty piece of `f`.
    PerF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigMMode {
    Indicator,
    Default,
    Tight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplexCuts {
    None,
    PointInSimplex,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TighteningConfig {
    pub fix_first_piece: bool,
    pub sort_pieces: bool,
    pub points_per_piece: PointsPerPiece,
    pub big_m: BigMMode,
    pub bound_variables: bool,
    pub monotonicity_cuts: bool,
    pub simplex_cuts: SimplexCuts,
}

impl TighteningConfig {
    /// Nothing enabled, big-M from the default scalar rule.
    pub const fn plain(big_m: BigMMode) -> Self {
        Self {
            fix_first_piece: false,
            sort_pieces: false,
            points_per_piece: PointsPerPiece::None,
            big_m,
            bound_variables: false,
            monotonicity_cuts: false,
            simplex_cuts: SimplexCuts::None,
        }
    }

    /// Whether building needs preprocessed bounds.
    pub fn needs_bounds(&self) -> bool {
        self.big_m != BigMMode::Indicator || self.bound_variables || self.monotonicity_cuts
    }
}

impl Default for TighteningConfig {
    fn default() -> Self {
        CombinationPreset::C9.config()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CombinationPreset {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
}

impl CombinationPreset {
    pub const ALL: [CombinationPreset; 11] = [
        CombinationPreset::C1,
        CombinationPreset::C2,
        CombinationPreset::C3,
        CombinationPreset::C4,
        CombinationPreset::C5,
        CombinationPreset::C6,
        CombinationPreset::C7,
        CombinationPreset::C8,
        CombinationPreset::C9,
        CombinationPreset::C10,
        CombinationPreset::C11,
    ];

    pub fn config(self) -> TighteningConfig {
        use BigMMode::*;
        use PointsPerPiece::{PerConvexPart, PerF};
        let base = TighteningConfig::plain(Tight);
        let with = |fix: bool, sort: bool, ppp: PointsPerPiece, bounds: bool| TighteningConfig {
            fix_first_piece: fix,
            sort_pieces: sort,
            points_per_piece: ppp,
            bound_variables: bounds,
            ..base
        };
        match self {
            CombinationPreset::C1 => TighteningConfig::plain(Indicator),
            CombinationPreset::C2 => TighteningConfig::plain(Default),
            CombinationPreset::C3 => base,
            CombinationPreset::C4 => with(true, false, PointsPerPiece::None, false),
            CombinationPreset::C5 => with(true, true, PointsPerPiece::None, false),
            CombinationPreset::C6 => with(true, true, PointsPerPiece::None, true),
            CombinationPreset::C7 => with(true, true, PerConvexPart, true),
            CombinationPreset::C8 => with(true, true, PerF, true),
            CombinationPreset::C9 => with(false, false, PerConvexPart, true),
            CombinationPreset::C10 => with(false, false, PerF, true),
            CombinationPreset::C11 => with(true, false, PerConvexPart, true),
        }
    }
}

impl fmt::Display for CombinationPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for CombinationPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CombinationPreset::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Validation(format!("unknown combination `{s}` (expected C1..C11)")))
    }
}

pub fn preset(id: &str) -> Result<TighteningConfig> {
    Ok(id.parse::<CombinationPreset>()?.config())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_c1_c3_c9_c11() {
        assert_eq!(preset("C1").unwrap(), TighteningConfig::plain(BigMMode::Indicator));
        assert_eq!(preset("C3").unwrap(), TighteningConfig::plain(BigMMode::Tight));
        let c9 = preset("c9").unwrap();
        assert!(!c9.fix_first_piece && !c9.sort_pieces && c9.bound_variables);
        assert_eq!(c9.points_per_piece, PointsPerPiece::PerConvexPart);
        assert_eq!(c9.big_m, BigMMode::Tight);
        let c11 = preset("C11").unwrap();
        assert!(c11.fix_first_piece && !c11.sort_pieces && c11.bound_variables);
        assert_eq!(c11.points_per_piece, PointsPerPiece::PerConvexPart);
        assert!(preset("C12").is_err());
    }

    #[test]
    fn preset_axes_table() {
        // (fix, sort, points per piece, big-M, bounds)
        use BigMMode::*;
        use PointsPerPiece::{None as N, PerConvexPart as Pc, PerF as Pf};
        let rows = [
            (false, false, N, Indicator, false),
            (false, false, N, Default, false),
            (false, false, N, Tight, false),
            (true, false, N, Tight, false),
            (true, true, N, Tight, false),
            (true, true, N, Tight, true),
            (true, true, Pc, Tight, true),
            (true, true, Pf, Tight, true),
            (false, false, Pc, Tight, true),
            (false, false, Pf, Tight, true),
            (true, false, Pc, Tight, true),
        ];
        for (p, (fix, sort, ppp, bm, bounds)) in CombinationPreset::ALL.into_iter().zip(rows) {
            let c = p.config();
            assert_eq!(
                (c.fix_first_piece, c.sort_pieces, c.points_per_piece, c.big_m, c.bound_variables),
                (fix, sort, ppp, bm, bounds),
                "{p}"
            );
            assert!(!c.monotonicity_cuts && c.simplex_cuts == SimplexCuts::None);
        }
    }

    #[test]
    fn objective_names_round_trip() {
        let all = [
            Objective::MaxError,
            Objective::MeanError,
            Objective::PieceCountF,
            Objective::PieceCountFplus,
            Objective::PieceCountFminus,
            Objective::Hierarchical {
                count: PieceCount::FMinus,
                error: ErrorMeasure::Mean,
            },
        ];
        for o in all {
            assert_eq!(o.to_string().parse::<Objective>().unwrap(), o);
        }
        assert!("hier:pieces-f".parse::<Objective>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(FitParams::new(0.1, 3, 3).is_ok());
        assert!(FitParams::new(-0.1, 3, 3).is_err());
        assert!(FitParams::new(0.1, 0, 3).is_err());
    }
}
