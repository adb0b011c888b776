//! Payload extraction from raw model output.
//!
//! Models wrap payloads in prose, code fences and apologies. Two payload
//! framings are recognised: a single JSON object (parameter, variable, SAR
//! and environment stages) and a `=====`-delimited block (objective,
//! constraint and modeling stages). The first well-formed payload wins; any
//! further payload is reported as a [`ParseNote::MultiplePayloads`].

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::shape::shape_from_json;
use super::{
    ActionKind, ActionSpec, EnvMode, EnvSpec, ParamType, ParameterDecl, RewardSpec, SarSpec,
    StateSpec, VariableDecl,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Parameters,
    Objective,
    Variables,
    Constraints,
    ObjectiveFormula,
    ConstraintFormulas,
    Sar,
    Env,
}

impl PayloadKind {
    fn is_json(self) -> bool {
        matches!(
            self,
            PayloadKind::Parameters | PayloadKind::Variables | PayloadKind::Sar | PayloadKind::Env
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StagePayload {
    Parameters(Vec<ParameterDecl>),
    Objective(String),
    Variables(Vec<VariableDecl>),
    Constraints(Vec<String>),
    ObjectiveFormula(String),
    ConstraintFormulas(Vec<String>),
    Sar(SarSpec),
    Env(EnvSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum ParseNote {
    /// More than one payload was present; the first was taken.
    MultiplePayloads { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub notes: Vec<ParseNote>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum ParseError {
    #[error("no parseable payload found")]
    NoPayloadFound,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}

fn malformed(msg: impl Into<String>) -> ParseError {
    ParseError::MalformedPayload(msg.into())
}

pub fn parse_structured_block(
    raw: &str,
    kind: PayloadKind,
) -> Result<Parsed<StagePayload>, ParseError> {
    if kind.is_json() {
        let (objects, saw_brace) = json_objects(raw);
        let Some(first) = objects.first() else {
            return Err(if saw_brace {
                malformed("no well-formed JSON object")
            } else {
                ParseError::NoPayloadFound
            });
        };
        let value = match kind {
            PayloadKind::Parameters => StagePayload::Parameters(parameters(first)?),
            PayloadKind::Variables => StagePayload::Variables(variables(first)?),
            PayloadKind::Sar => StagePayload::Sar(sar(first)?),
            PayloadKind::Env => StagePayload::Env(env(first)?),
            _ => unreachable!(),
        };
        Ok(Parsed {
            value,
            notes: multiple(objects.len()),
        })
    } else {
        let blocks = delimited_blocks(raw)?;
        let body = blocks[0].trim();
        let mut notes = multiple(blocks.len());
        let value = match kind {
            PayloadKind::Objective => {
                let prose = strip_label(body, "OBJECTIVE").trim().to_string();
                if prose.is_empty() {
                    return Err(malformed("empty objective block"));
                }
                StagePayload::Objective(prose)
            }
            PayloadKind::Constraints => {
                let items: Vec<String> = body
                    .lines()
                    .map(constraint_line)
                    .filter(|l| !l.is_empty())
                    .collect();
                if items.is_empty() {
                    return Err(malformed("empty constraint block"));
                }
                StagePayload::Constraints(items)
            }
            PayloadKind::ObjectiveFormula => {
                let spans = math_spans(body)?;
                let Some(first) = spans.first() else {
                    return Err(malformed("formula must be written between $...$"));
                };
                if spans.len() > 1 {
                    notes.push(ParseNote::MultiplePayloads { count: spans.len() });
                }
                StagePayload::ObjectiveFormula(first.clone())
            }
            PayloadKind::ConstraintFormulas => {
                let spans = math_spans(body)?;
                if spans.is_empty() {
                    return Err(malformed("formulas must be written between $...$"));
                }
                StagePayload::ConstraintFormulas(spans)
            }
            _ => unreachable!(),
        };
        Ok(Parsed { value, notes })
    }
}

fn multiple(count: usize) -> Vec<ParseNote> {
    if count > 1 {
        vec![ParseNote::MultiplePayloads { count }]
    } else {
        Vec::new()
    }
}

/// All top-level JSON objects embedded in `raw`, in order.
fn json_objects(raw: &str) -> (Vec<Map<String, Value>>, bool) {
    let mut out = Vec::new();
    let mut saw_brace = false;
    let mut i = 0;
    while let Some(rel) = raw[i..].find('{') {
        saw_brace = true;
        let start = i + rel;
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                out.push(map);
                i = start + stream.byte_offset();
            }
            // An object cut off by the end of the reply swallows every
            // later brace; anything parsed from inside it is a fragment.
            Some(Err(e)) if e.is_eof() => break,
            _ => i = start + 1,
        }
    }
    (out, saw_brace)
}

fn delimited_blocks(raw: &str) -> Result<Vec<&str>, ParseError> {
    let mut fences = Vec::new();
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'=' {
            let start = i;
            while i < bytes.len() && bytes[i] == b'=' {
                i += 1;
            }
            if i - start >= 5 {
                fences.push((start, i));
            }
        } else {
            i += 1;
        }
    }
    match fences.len() {
        0 => Err(ParseError::NoPayloadFound),
        1 => Err(malformed("unterminated ===== block")),
        _ => Ok(fences
            .chunks_exact(2)
            .map(|pair| &raw[pair[0].1..pair[1].0])
            .collect()),
    }
}

fn strip_label<'a>(text: &'a str, label: &str) -> &'a str {
    let t = text.trim_start();
    if t.len() >= label.len() && t[..label.len()].eq_ignore_ascii_case(label) {
        let rest = t[label.len()..].trim_start();
        if let Some(rest) = rest.strip_prefix(':') {
            return rest;
        }
    }
    text
}

fn constraint_line(line: &str) -> String {
    let mut l = line.trim();
    if l.len() >= 10 && l[..10].eq_ignore_ascii_case("CONSTRAINT") {
        if let Some(idx) = l.find(':') {
            l = &l[idx + 1..];
        }
    } else if let Some(rest) = l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")) {
        l = rest;
    } else {
        let digits = l.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 {
            let rest = &l[digits..];
            if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
                l = rest;
            }
        }
    }
    l.trim().to_string()
}

/// Interiors of `$...$` and `$$...$$` spans. `\$` is a literal dollar.
fn math_spans(body: &str) -> Result<Vec<String>, ParseError> {
    let bytes = body.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'$' => {
                let display = bytes.get(i + 1) == Some(&b'$');
                let open = if display { 2 } else { 1 };
                let start = i + open;
                let mut j = start;
                let mut end = None;
                while j < bytes.len() {
                    if bytes[j] == b'\\' {
                        j += 2;
                        continue;
                    }
                    if bytes[j] == b'$' && (!display || bytes.get(j + 1) == Some(&b'$')) {
                        end = Some(j);
                        break;
                    }
                    j += 1;
                }
                let Some(end) = end else {
                    return Err(malformed("unterminated $...$ span"));
                };
                let text = body[start..end].trim();
                if !text.is_empty() {
                    spans.push(text.to_string());
                }
                i = end + open;
            }
            _ => i += 1,
        }
    }
    Ok(spans)
}

fn get<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| keys.iter().any(|want| k.eq_ignore_ascii_case(want)))
        .map(|(_, v)| v)
}

fn get_str(obj: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    get(obj, keys).and_then(|v| match v {
        Value::String(s) => Some(s.clone()),
        Value::Null => None,
        other => Some(other.to_string()),
    })
}

/// The list of declaration entries, whichever of the accepted layouts was
/// used: `{"PARAMETERS": [...]}`, a single `{"SYMBOL": ...}` entry, or a map
/// keyed by symbol.
fn declaration_entries(
    obj: &Map<String, Value>,
    list_key: &str,
) -> Result<Vec<Map<String, Value>>, ParseError> {
    if let Some(list) = get(obj, &[list_key]) {
        return match list {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Object(m) => Ok(m.clone()),
                    _ => Err(malformed(format!("{list_key} entries must be objects"))),
                })
                .collect(),
            Value::Object(map) => keyed_entries(map),
            _ => Err(malformed(format!("{list_key} must be a list"))),
        };
    }
    if get(obj, &["SYMBOL"]).is_some() {
        return Ok(vec![obj.clone()]);
    }
    keyed_entries(obj)
}

fn keyed_entries(map: &Map<String, Value>) -> Result<Vec<Map<String, Value>>, ParseError> {
    map.iter()
        .map(|(symbol, v)| match v {
            Value::Object(fields) => {
                let mut entry = Map::new();
                entry.insert("SYMBOL".into(), Value::String(symbol.clone()));
                entry.extend(fields.clone());
                Ok(entry)
            }
            _ => Err(malformed(format!("entry `{symbol}` must be an object"))),
        })
        .collect()
}

fn symbol_and_shape(
    entry: &Map<String, Value>,
) -> Result<(String, super::ShapeExpr, String), ParseError> {
    let symbol = get_str(entry, &["SYMBOL"])
        .map(|s| s.trim().to_string())
        .ok_or_else(|| malformed("entry without SYMBOL"))?;
    let shape_value =
        get(entry, &["SHAPE"]).ok_or_else(|| malformed(format!("`{symbol}` has no SHAPE")))?;
    let shape = shape_from_json(shape_value).map_err(|e| malformed(format!("`{symbol}`: {e}")))?;
    let definition = get_str(entry, &["DEFINITION", "DESCRIPTION"]).unwrap_or_default();
    Ok((symbol, shape, definition))
}

fn parameters(obj: &Map<String, Value>) -> Result<Vec<ParameterDecl>, ParseError> {
    let entries = declaration_entries(obj, "PARAMETERS")?;
    if entries.is_empty() {
        return Err(malformed("no parameters"));
    }
    entries
        .iter()
        .map(|e| {
            let (symbol, shape, definition) = symbol_and_shape(e)?;
            let ty_text = get_str(e, &["TYPE"])
                .ok_or_else(|| malformed(format!("`{symbol}` has no TYPE")))?;
            let ty = ParamType::parse(&ty_text).ok_or_else(|| {
                malformed(format!(
                    "`{symbol}` TYPE `{ty_text}` is not one of int, float, binary"
                ))
            })?;
            Ok(ParameterDecl {
                symbol,
                shape,
                definition,
                ty,
            })
        })
        .collect()
}

fn variables(obj: &Map<String, Value>) -> Result<Vec<VariableDecl>, ParseError> {
    let entries = declaration_entries(obj, "VARIABLES")?;
    if entries.is_empty() {
        return Err(malformed("no variables"));
    }
    entries
        .iter()
        .map(|e| {
            let (symbol, shape, definition) = symbol_and_shape(e)?;
            Ok(VariableDecl {
                symbol,
                shape,
                definition,
            })
        })
        .collect()
}

fn symbol_list(v: Option<&Value>) -> Result<Vec<String>, ParseError> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(s
            .split(',')
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(|s| s.trim().to_string())
                    .ok_or_else(|| malformed("VARIABLES entries must be strings"))
            })
            .collect(),
        Some(_) => Err(malformed("VARIABLES must be a list of symbols")),
    }
}

fn section<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
) -> Result<&'a Map<String, Value>, ParseError> {
    match get(obj, &[key]) {
        Some(Value::Object(m)) => Ok(m),
        Some(_) => Err(malformed(format!("{key} must be an object"))),
        None => Err(malformed(format!("missing {key}"))),
    }
}

fn shape_field(obj: &Map<String, Value>, owner: &str) -> Result<super::ShapeExpr, ParseError> {
    let v = get(obj, &["SHAPE"]).ok_or_else(|| malformed(format!("{owner} has no SHAPE")))?;
    shape_from_json(v).map_err(|e| malformed(format!("{owner}: {e}")))
}

fn sar(obj: &Map<String, Value>) -> Result<SarSpec, ParseError> {
    let state = section(obj, "STATE")?;
    let action = section(obj, "ACTION")?;
    let reward = section(obj, "REWARD")?;

    let kind_text =
        get_str(action, &["TYPE", "KIND"]).ok_or_else(|| malformed("ACTION has no TYPE"))?;
    let kind = match kind_text.trim().to_ascii_lowercase().as_str() {
        "discrete" => ActionKind::Discrete,
        "continuous" => ActionKind::Continuous,
        other => {
            return Err(malformed(format!(
                "ACTION TYPE `{other}` is not discrete or continuous"
            )))
        }
    };

    Ok(SarSpec {
        state: StateSpec {
            description: get_str(state, &["DESCRIPTION"]).unwrap_or_default(),
            variables: symbol_list(get(state, &["VARIABLES"]))?,
            shape: shape_field(state, "STATE")?,
        },
        action: ActionSpec {
            description: get_str(action, &["DESCRIPTION"]).unwrap_or_default(),
            variables: symbol_list(get(action, &["VARIABLES"]))?,
            shape: shape_field(action, "ACTION")?,
            kind,
        },
        reward: RewardSpec {
            prose: get_str(reward, &["DESCRIPTION", "PROSE"]).unwrap_or_default(),
            formula: get_str(reward, &["FORMULA"])
                .map(|f| strip_math_delimiters(&f))
                .unwrap_or_default(),
        },
    })
}

fn strip_math_delimiters(f: &str) -> String {
    let t = f.trim();
    let t = t
        .strip_prefix("$$")
        .and_then(|r| r.strip_suffix("$$"))
        .or_else(|| t.strip_prefix('$').and_then(|r| r.strip_suffix('$')))
        .unwrap_or(t);
    t.trim().to_string()
}

fn env(obj: &Map<String, Value>) -> Result<EnvSpec, ParseError> {
    let mode_text = get_str(obj, &["MODE"]).ok_or_else(|| malformed("missing MODE"))?;
    let mode = match mode_text.trim().to_ascii_lowercase().as_str() {
        "prebuilt" | "existing" | "gym" => EnvMode::Prebuilt,
        "custom" => EnvMode::Custom,
        other => {
            return Err(malformed(format!(
                "MODE `{other}` is not prebuilt or custom"
            )))
        }
    };
    Ok(EnvSpec {
        mode,
        prebuilt_id: get_str(obj, &["PREBUILT_ID", "GYM_ID"])
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty()),
        transition_logic: get_str(obj, &["TRANSITION_LOGIC"]).unwrap_or_default(),
        termination: get_str(obj, &["TERMINATION"]).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WIRELESS_PARAMS: &str = r#"Sure! Here are the parameters:
{
  "PARAMETERS": [
    {"SYMBOL": "Bandwidth", "SHAPE": "[]", "DEFINITION": "The bandwidth of the system in MHz", "TYPE": "float"},
    {"SYMBOL": "TransmissionPower", "SHAPE": "[]", "DEFINITION": "The transmission power in mW", "TYPE": "float"},
    {"SYMBOL": "NoiseDensity", "SHAPE": "[]", "DEFINITION": "The noise density in dBm", "TYPE": "float"},
    {"SYMBOL": "PathLossCoefficient", "SHAPE": "[]", "DEFINITION": "Path loss coefficient affecting the channel", "TYPE": "float"},
    {"SYMBOL": "ShadowingStandardDeviation", "SHAPE": "[]", "DEFINITION": "Standard deviation of log-normal shadowing in dB", "TYPE": "float"},
    {"SYMBOL": "UserDistances", "SHAPE": "[4]", "DEFINITION": "Distances of users from the base station (array of size 4, in meters)", "TYPE": "float"},
    {"SYMBOL": "ChannelGainRange", "SHAPE": "[2]", "DEFINITION": "Normalized range of channel gains in dB (array of size 2)", "TYPE": "float"}
  ]
}
Let me know if you need anything else."#;

    #[test]
    fn wireless_parameter_object() {
        let parsed = parse_structured_block(WIRELESS_PARAMS, PayloadKind::Parameters).unwrap();
        let StagePayload::Parameters(params) = parsed.value else {
            panic!("wrong payload")
        };
        assert_eq!(params.len(), 7);
        assert_eq!(params[0].symbol, "Bandwidth");
        assert_eq!(params[0].ty, ParamType::Float);
        assert!(params[0].shape.is_scalar());
        let distances = params.iter().find(|p| p.symbol == "UserDistances").unwrap();
        assert_eq!(distances.shape.to_string(), "[4]");
        assert!(parsed.notes.is_empty());
    }

    #[test]
    fn keyed_parameter_layout() {
        let raw = r#"```json
{"GridSize": {"shape": "[]", "definition": "grid side", "type": "int"},
 "PickupLocations": {"shape": "[NumberOfPackages, 2]", "definition": "pickups", "type": "int"}}
```"#;
        let parsed = parse_structured_block(raw, PayloadKind::Parameters).unwrap();
        let StagePayload::Parameters(params) = parsed.value else {
            panic!()
        };
        assert_eq!(params[1].symbol, "PickupLocations");
        assert_eq!(params[1].shape.to_string(), "[NumberOfPackages, 2]");
    }

    #[test]
    fn single_line_objective_block() {
        let parsed = parse_structured_block(
            "===== OBJECTIVE: maximize uptime =====",
            PayloadKind::Objective,
        )
        .unwrap();
        assert_eq!(
            parsed.value,
            StagePayload::Objective("maximize uptime".into())
        );
    }

    #[test]
    fn prose_without_block() {
        for kind in [
            PayloadKind::Objective,
            PayloadKind::Parameters,
            PayloadKind::Sar,
        ] {
            assert_eq!(
                parse_structured_block("I think the objective is to win.", kind),
                Err(ParseError::NoPayloadFound)
            );
        }
    }

    #[test]
    fn broken_json_is_malformed() {
        let err = parse_structured_block(
            r#"{"PARAMETERS": [ {"SYMBOL": "A""#,
            PayloadKind::Parameters,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::MalformedPayload(_)));
    }

    #[test]
    fn truncated_object_is_malformed() {
        let raw = r#"{"PARAMETERS": [{"SYMBOL": "A", "SHAPE": "[]", "DEFINITION": "a", "TYPE": "int"}, {"SYMBOL": "#;
        assert!(matches!(
            parse_structured_block(raw, PayloadKind::Parameters),
            Err(ParseError::MalformedPayload(_))
        ));
    }

    #[test]
    fn bad_type_is_malformed() {
        let raw = r#"{"PARAMETERS": [{"SYMBOL": "Count", "SHAPE": "[]", "DEFINITION": "n", "TYPE": "string"}]}"#;
        let err = parse_structured_block(raw, PayloadKind::Parameters).unwrap_err();
        assert!(err.to_string().contains("not one of int, float, binary"));
    }

    #[test]
    fn second_object_is_noted_and_ignored() {
        let raw = r#"{"MODE": "custom", "TRANSITION_LOGIC": "a"} and also {"MODE": "prebuilt"}"#;
        let parsed = parse_structured_block(raw, PayloadKind::Env).unwrap();
        assert_eq!(parsed.notes, vec![ParseNote::MultiplePayloads { count: 2 }]);
        let StagePayload::Env(env) = parsed.value else {
            panic!()
        };
        assert_eq!(env.mode, EnvMode::Custom);
    }

    #[test]
    fn unterminated_block() {
        let err =
            parse_structured_block("=====\nOBJECTIVE: x", PayloadKind::Objective).unwrap_err();
        assert!(matches!(err, ParseError::MalformedPayload(_)));
    }

    #[test]
    fn constraint_lines() {
        let raw = "=====\nCONSTRAINT: Only one user per slot.\n- Power is non-negative.\n2. Rates follow Shannon.\n=====";
        let parsed = parse_structured_block(raw, PayloadKind::Constraints).unwrap();
        assert_eq!(
            parsed.value,
            StagePayload::Constraints(vec![
                "Only one user per slot.".into(),
                "Power is non-negative.".into(),
                "Rates follow Shannon.".into(),
            ])
        );
    }

    #[test]
    fn formulas_between_dollars() {
        let raw =
            "=====\n$\\text{TransmissionPower} \\geq 0$\n$$\\text{Bandwidth} \\geq 0$$\n=====";
        let parsed = parse_structured_block(raw, PayloadKind::ConstraintFormulas).unwrap();
        assert_eq!(
            parsed.value,
            StagePayload::ConstraintFormulas(vec![
                "\\text{TransmissionPower} \\geq 0".into(),
                "\\text{Bandwidth} \\geq 0".into(),
            ])
        );
        let parsed = parse_structured_block(raw, PayloadKind::ObjectiveFormula).unwrap();
        assert_eq!(parsed.notes, vec![ParseNote::MultiplePayloads { count: 2 }]);
    }

    #[test]
    fn escaped_dollar_inside_formula() {
        let raw = "=====\n$\\text{Price} = 12\\$ $\n=====";
        let parsed = parse_structured_block(raw, PayloadKind::ObjectiveFormula).unwrap();
        assert_eq!(
            parsed.value,
            StagePayload::ObjectiveFormula("\\text{Price} = 12\\$".into())
        );
    }

    #[test]
    fn sar_with_trailing_comma_shape() {
        let raw = r#"{"STATE": {"DESCRIPTION": "status", "VARIABLES": ["PoleAngle", "CartPosition"], "SHAPE": "[4,]"},
 "ACTION": {"VARIABLES": "force", "SHAPE": "[1]", "TYPE": "discrete"},
 "REWARD": {"DESCRIPTION": "1 while upright", "FORMULA": "$R_t = 1$"}}"#;
        let parsed = parse_structured_block(raw, PayloadKind::Sar).unwrap();
        let StagePayload::Sar(sar) = parsed.value else {
            panic!()
        };
        assert_eq!(sar.state.shape.to_string(), "[4]");
        assert_eq!(sar.action.variables, vec!["force".to_string()]);
        assert_eq!(sar.reward.formula, "R_t = 1");
    }

    #[test]
    fn parsing_is_pure() {
        let a = parse_structured_block(WIRELESS_PARAMS, PayloadKind::Parameters);
        let b = parse_structured_block(WIRELESS_PARAMS, PayloadKind::Parameters);
        assert_eq!(a, b);
    }
}
