use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Expr;

/// Question category used for report breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionType {
    None,
    Count,
    Comparative,
    Superlative,
}

impl FunctionType {
    pub fn as_str(self) -> &'static str {
        match self {
            FunctionType::None => "none",
            FunctionType::Count => "count",
            FunctionType::Comparative => "comparative",
            FunctionType::Superlative => "superlative",
        }
    }
}

impl fmt::Display for FunctionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(FunctionType::None),
            "count" => Ok(FunctionType::Count),
            "comparative" | "comparison" => Ok(FunctionType::Comparative),
            "superlative" => Ok(FunctionType::Superlative),
            other => Err(format!("unknown function type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintProfile {
    pub reasoning_paths: usize,
    pub calc_constraints: usize,
    pub has_negative: bool,
    pub total: usize,
    pub function_type: FunctionType,
}

/// Counts reasoning paths (START leaves feeding a JOIN chain) and
/// calculation constraints (COUNT, ARG, CMP).
pub fn profile_constraints(expr: &Expr) -> ConstraintProfile {
    let mut paths = 0;
    let mut calc = 0;
    let mut neg = false;
    let (mut has_count, mut has_cmp, mut has_arg) = (false, false, false);
    for (_, node) in expr.preorder() {
        match node {
            Expr::Join { inner, negated, .. } => {
                neg |= *negated;
                if matches!(**inner, Expr::Start(_)) {
                    paths += 1;
                }
            }
            Expr::Count(_) => {
                calc += 1;
                has_count = true;
            }
            Expr::Cmp { .. } => {
                calc += 1;
                has_cmp = true;
            }
            Expr::Arg { .. } => {
                calc += 1;
                has_arg = true;
            }
            _ => {}
        }
    }
    let function_type = if has_arg {
        FunctionType::Superlative
    } else if has_cmp {
        FunctionType::Comparative
    } else if has_count {
        FunctionType::Count
    } else {
        FunctionType::None
    };
    ConstraintProfile {
        reasoning_paths: paths,
        calc_constraints: calc,
        has_negative: neg,
        total: paths + calc,
        function_type,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pylf::parse_pylf;

    fn profile(text: &str) -> ConstraintProfile {
        profile_constraints(&parse_pylf(text).unwrap())
    }

    #[test]
    fn q2_profile() {
        let p = profile("STOP(AND(JOIN('R_producing', START('Boeing Company'), neg=True), CMP('<', 'mass', 2.32e+03)))");
        assert_eq!(
            p,
            ConstraintProfile {
                reasoning_paths: 1,
                calc_constraints: 1,
                has_negative: true,
                total: 2,
                function_type: FunctionType::Comparative
            }
        );
    }

    #[test]
    fn identity_profile() {
        let p = profile("STOP(START('x'))");
        assert_eq!(
            (p.reasoning_paths, p.calc_constraints, p.has_negative, p.total, p.function_type),
            (0, 0, false, 0, FunctionType::None)
        );
    }

    #[test]
    fn two_path_count() {
        let p = profile("STOP(COUNT(AND(JOIN('a', START('x')), JOIN('b', START('y')))))");
        assert_eq!(
            (p.reasoning_paths, p.calc_constraints, p.has_negative, p.total, p.function_type),
            (2, 1, false, 3, FunctionType::Count)
        );
    }

    #[test]
    fn chains_count_once_and_superlative_wins() {
        let p = profile("STOP(ARG('ARGMAX', AND(JOIN('a', JOIN('b', START('x'))), CMP('>', 'm', 3)), 'm'))");
        assert_eq!(
            (p.reasoning_paths, p.calc_constraints, p.function_type),
            (1, 2, FunctionType::Superlative)
        );
    }
}
