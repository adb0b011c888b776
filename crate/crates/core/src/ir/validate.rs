//! Structural checks over an [`MdpIr`].
//!
//! Violations are data: the pipeline appends them to a re-ask prompt, and
//! the evaluator treats any violation as a modeling failure. Warnings record
//! tolerated drift (lowercase symbols, display aliases, helper quantities
//! the prompts never declare) without failing the formulation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::latex::{extract_latex_symbols, is_camel_identifier};
use super::{ActionKind, EnvMode, MdpIr, ParamType, ShapeExpr};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateSymbol { symbol: String },
    InvalidSymbol { symbol: String },
    UnresolvedShapeTerm { owner: String, term: String },
    NonScalarShapeTerm { owner: String, term: String },
    UndeclaredSymbol { location: String, symbol: String },
    UndeclaredSarVariable { role: String, symbol: String },
    NonDiscreteAction,
    EnvModeInconsistent { reason: String },
    FormulaCountMismatch { constraints: usize, formulas: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    LowercaseSymbol {
        location: String,
        symbol: String,
    },
    AliasedSymbol {
        location: String,
        alias: String,
        target: String,
    },
    DerivedQuantity {
        location: String,
        symbol: String,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateSymbol { symbol } => {
                write!(f, "symbol `{symbol}` is declared more than once")
            }
            Violation::InvalidSymbol { symbol } => write!(
                f,
                "symbol `{symbol}` is not CamelCase (leading uppercase letter, letters and digits only)"
            ),
            Violation::UnresolvedShapeTerm { owner, term } => write!(
                f,
                "shape of `{owner}` uses `{term}`, which is not a declared parameter"
            ),
            Violation::NonScalarShapeTerm { owner, term } => write!(
                f,
                "shape of `{owner}` uses `{term}`, which is not a scalar int parameter"
            ),
            Violation::UndeclaredSymbol { location, symbol } => write!(
                f,
                "{location} formula uses `{symbol}`, which is neither a parameter nor a variable"
            ),
            Violation::UndeclaredSarVariable { role, symbol } => {
                write!(f, "{role} refers to undeclared variable `{symbol}`")
            }
            Violation::NonDiscreteAction => {
                write!(f, "action space must be discrete (DQN backbone)")
            }
            Violation::EnvModeInconsistent { reason } => {
                write!(f, "environment specification is inconsistent: {reason}")
            }
            Violation::FormulaCountMismatch {
                constraints,
                formulas,
            } => write!(
                f,
                "expected one formula per constraint ({constraints}), got {formulas}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn closure_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::UndeclaredSymbol { .. }))
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
        self.warnings.extend(other.warnings);
    }
}

/// Which undeclared formula tokens are tolerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SymbolPolicy {
    /// Notation that is never a model symbol (distribution names, helper
    /// function names). Ignored silently.
    pub helper_tokens: BTreeSet<String>,
    /// Quantities that formulas introduce without declaring them (random
    /// draws, status flags, per-step observations). Tolerated with a
    /// warning.
    pub derived_quantities: BTreeSet<String>,
    /// Display aliases mapped to the declared symbol they abbreviate.
    /// Tolerated with a warning when the target is declared.
    pub aliases: BTreeMap<String, String>,
    pub require_discrete_actions: bool,
}

impl Default for SymbolPolicy {
    fn default() -> Self {
        let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect();
        Self {
            helper_tokens: set(&[
                "Poisson",
                "Bernoulli",
                "Uniform",
                "Normal",
                "Gaussian",
                "LogNormal",
                "Exp",
                "Var",
                "Cov",
                "Pr",
                "Prob",
                "Range",
                "Clip",
            ]),
            derived_quantities: set(&[
                "Demand",
                "PenaltyCost",
                "Position",
                "Velocity",
                "CarPosition",
                "CarVelocity",
                "Acceleration",
                "P",
                "V",
                "A",
                "PickupStatuses",
                "DeliveryStatuses",
                "NumberOfPackagesPicked",
                "NumberOfPackagesDelivered",
            ]),
            aliases: [("B", "Bandwidth"), ("MaxCartVelocity", "CartMaxVelocity")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            require_discrete_actions: true,
        }
    }
}

impl SymbolPolicy {
    /// Strict policy: only declared symbols are accepted.
    pub fn strict() -> Self {
        Self {
            helper_tokens: BTreeSet::new(),
            derived_quantities: BTreeSet::new(),
            aliases: BTreeMap::new(),
            require_discrete_actions: true,
        }
    }

    /// Whether `symbol` may appear in a formula given `declared`.
    pub fn admits(&self, declared: &BTreeSet<&str>, symbol: &str) -> bool {
        !matches!(self.resolve(declared, symbol), Resolution::Unknown)
    }

    fn resolve(&self, declared: &BTreeSet<&str>, symbol: &str) -> Resolution {
        if declared.contains(symbol) {
            Resolution::Declared
        } else if self.helper_tokens.contains(symbol) {
            Resolution::Helper
        } else if let Some(target) = self
            .aliases
            .get(symbol)
            .filter(|t| declared.contains(t.as_str()))
        {
            Resolution::Alias(target.clone())
        } else if self.derived_quantities.contains(symbol) {
            Resolution::Derived
        } else if symbol.starts_with(|c: char| c.is_ascii_lowercase()) {
            Resolution::Lowercase
        } else {
            Resolution::Unknown
        }
    }
}

enum Resolution {
    Declared,
    Helper,
    Alias(String),
    Derived,
    Lowercase,
    Unknown,
}

/// Checks `ir` under the default [`SymbolPolicy`].
pub fn validate_ir(ir: &MdpIr) -> ValidationReport {
    validate_with(ir, &SymbolPolicy::default())
}

pub fn validate_with(ir: &MdpIr, policy: &SymbolPolicy) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for symbol in ir.declared_symbols() {
        *seen.entry(symbol).or_default() += 1;
        if seen[symbol] == 2 {
            report.violations.push(Violation::DuplicateSymbol {
                symbol: symbol.to_string(),
            });
        }
        if seen[symbol] == 1 && !is_camel_identifier(symbol) {
            report.violations.push(Violation::InvalidSymbol {
                symbol: symbol.to_string(),
            });
        }
    }
    let declared: BTreeSet<&str> = seen.keys().copied().collect();

    for p in &ir.parameters {
        check_shape(ir, &p.symbol, &p.shape, &mut report);
    }
    for v in &ir.variables {
        check_shape(ir, &v.symbol, &v.shape, &mut report);
    }

    for (location, formula) in ir.formulas() {
        for symbol in extract_latex_symbols(formula) {
            match policy.resolve(&declared, &symbol) {
                Resolution::Declared | Resolution::Helper => {}
                Resolution::Alias(target) => report.warnings.push(Warning::AliasedSymbol {
                    location: location.clone(),
                    alias: symbol,
                    target,
                }),
                Resolution::Derived => report.warnings.push(Warning::DerivedQuantity {
                    location: location.clone(),
                    symbol,
                }),
                Resolution::Lowercase => report.warnings.push(Warning::LowercaseSymbol {
                    location: location.clone(),
                    symbol,
                }),
                Resolution::Unknown => report.violations.push(Violation::UndeclaredSymbol {
                    location: location.clone(),
                    symbol,
                }),
            }
        }
    }

    if let Some(sar) = &ir.sar {
        check_shape(ir, "state", &sar.state.shape, &mut report);
        check_shape(ir, "action", &sar.action.shape, &mut report);
        let roles = [
            ("state", &sar.state.variables),
            ("action", &sar.action.variables),
        ];
        for (role, vars) in roles {
            for symbol in vars {
                match policy.resolve(&declared, symbol) {
                    Resolution::Declared => {}
                    Resolution::Alias(target) => report.warnings.push(Warning::AliasedSymbol {
                        location: role.to_string(),
                        alias: symbol.clone(),
                        target,
                    }),
                    Resolution::Derived => report.warnings.push(Warning::DerivedQuantity {
                        location: role.to_string(),
                        symbol: symbol.clone(),
                    }),
                    Resolution::Lowercase => report.warnings.push(Warning::LowercaseSymbol {
                        location: role.to_string(),
                        symbol: symbol.clone(),
                    }),
                    Resolution::Helper | Resolution::Unknown => {
                        report.violations.push(Violation::UndeclaredSarVariable {
                            role: role.to_string(),
                            symbol: symbol.clone(),
                        })
                    }
                }
            }
        }
        if policy.require_discrete_actions && sar.action.kind != ActionKind::Discrete {
            report.violations.push(Violation::NonDiscreteAction);
        }
    }

    if let Some(env) = &ir.env {
        match env.mode {
            EnvMode::Prebuilt
                if env
                    .prebuilt_id
                    .as_deref()
                    .is_none_or(|s| s.trim().is_empty()) =>
            {
                report.violations.push(Violation::EnvModeInconsistent {
                    reason: "prebuilt mode requires PREBUILT_ID".into(),
                })
            }
            EnvMode::Custom if env.transition_logic.trim().is_empty() => {
                report.violations.push(Violation::EnvModeInconsistent {
                    reason: "custom mode requires TRANSITION_LOGIC".into(),
                })
            }
            _ => {}
        }
    }

    report
}

fn check_shape(ir: &MdpIr, owner: &str, shape: &ShapeExpr, report: &mut ValidationReport) {
    let mut reported = BTreeSet::new();
    for term in shape.symbols() {
        if !reported.insert(term) {
            continue;
        }
        match ir.parameter(term) {
            Some(p) if p.ty == ParamType::Int && p.shape.is_scalar() => {}
            Some(_) => report.violations.push(Violation::NonScalarShapeTerm {
                owner: owner.to_string(),
                term: term.to_string(),
            }),
            None if term.starts_with(|c: char| c.is_ascii_lowercase()) => {
                report.warnings.push(Warning::LowercaseSymbol {
                    location: format!("shape of {owner}"),
                    symbol: term.to_string(),
                })
            }
            None => report.violations.push(Violation::UnresolvedShapeTerm {
                owner: owner.to_string(),
                term: term.to_string(),
            }),
        }
    }
}
