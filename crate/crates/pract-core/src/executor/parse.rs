//! Parser for the canonical action grammar `name[arg1; arg2; ...]`.
//!
//! Arguments are positional and map onto the action's parameter schema in
//! order. When an action declares exactly one parameter the whole bracket
//! content is taken verbatim, so free-text arguments may contain
//! semicolons.

use thiserror::Error;

use crate::types::{ActionCall, ActionSpec, ParamType};

#[derive(Debug, Error)]
pub enum ParseActionError {
    #[error("cannot parse an action from: {raw}")]
    Unparseable { raw: String },
    #[error("unknown action {action} in: {raw}")]
    UnknownAction { action: String, raw: String },
    #[error("action {action} takes {expected} argument(s) ({required} required), got {got}: {raw}")]
    ArityMismatch {
        action: String,
        expected: usize,
        required: usize,
        got: usize,
        raw: String,
    },
    #[error("argument {param} of {action} expects {expected}, got {value:?}: {raw}")]
    TypeMismatch {
        action: String,
        param: String,
        expected: String,
        value: String,
        raw: String,
    },
}

impl ParseActionError {
    pub fn raw(&self) -> &str {
        match self {
            ParseActionError::Unparseable { raw }
            | ParseActionError::UnknownAction { raw, .. }
            | ParseActionError::ArityMismatch { raw, .. }
            | ParseActionError::TypeMismatch { raw, .. } => raw,
        }
    }
}

/// Parses backend text into a validated [`ActionCall`].
pub fn parse_action(raw: &str, space: &[ActionSpec]) -> Result<ActionCall, ParseActionError> {
    let mut text = raw.trim();
    // Tolerate a conventional "Action:" label before the call.
    for label in ["Action:", "action:", "ACTION:"] {
        if let Some(rest) = text.strip_prefix(label) {
            text = rest.trim_start();
            break;
        }
    }

    let open = text.find('[').ok_or_else(|| ParseActionError::Unparseable {
        raw: raw.to_string(),
    })?;
    let close = text.rfind(']').ok_or_else(|| ParseActionError::Unparseable {
        raw: raw.to_string(),
    })?;
    if close < open {
        return Err(ParseActionError::Unparseable {
            raw: raw.to_string(),
        });
    }
    let name = text[..open].trim();
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
        || !text[close + 1..].trim().is_empty()
    {
        return Err(ParseActionError::Unparseable {
            raw: raw.to_string(),
        });
    }
    let body = &text[open + 1..close];

    let spec = space
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ParseActionError::UnknownAction {
            action: name.to_string(),
            raw: raw.to_string(),
        })?;

    let values: Vec<String> = if spec.params.len() <= 1 {
        if body.trim().is_empty() {
            Vec::new()
        } else {
            vec![body.trim().to_string()]
        }
    } else {
        body.split(';').map(|v| v.trim().to_string()).collect()
    };

    let required = spec.params.iter().filter(|p| p.required).count();
    if values.len() < required || values.len() > spec.params.len() {
        return Err(ParseActionError::ArityMismatch {
            action: spec.name.clone(),
            expected: spec.params.len(),
            required,
            got: values.len(),
            raw: raw.to_string(),
        });
    }

    let mut args = std::collections::BTreeMap::new();
    for (param, value) in spec.params.iter().zip(values.iter()) {
        match &param.param_type {
            ParamType::String => {}
            ParamType::Integer => {
                if value.parse::<i64>().is_err() {
                    return Err(ParseActionError::TypeMismatch {
                        action: spec.name.clone(),
                        param: param.name.clone(),
                        expected: "an integer".into(),
                        value: value.clone(),
                        raw: raw.to_string(),
                    });
                }
            }
            ParamType::Enum { values: allowed } => {
                if !allowed.iter().any(|a| a == value) {
                    return Err(ParseActionError::TypeMismatch {
                        action: spec.name.clone(),
                        param: param.name.clone(),
                        expected: format!("one of {allowed:?}"),
                        value: value.clone(),
                        raw: raw.to_string(),
                    });
                }
            }
        }
        args.insert(param.name.clone(), value.clone());
    }

    Ok(ActionCall {
        action: spec.name.clone(),
        args,
        raw_text: raw.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ParamSpec;

    fn shop_space() -> Vec<ActionSpec> {
        vec![
            ActionSpec::new("search", "Search.", vec![ParamSpec::string("query")]),
            ActionSpec::new("click", "Click.", vec![ParamSpec::string("target")]),
        ]
    }

    #[test]
    fn parses_single_arg_call() {
        let call = parse_action("search[red long dress]", &shop_space()).unwrap();
        assert_eq!(call.action, "search");
        assert_eq!(call.args["query"], "red long dress");
        assert_eq!(call.raw_text, "search[red long dress]");
    }

    #[test]
    fn parses_click_target() {
        let call = parse_action("click[item 2]", &shop_space()).unwrap();
        assert_eq!(call.action, "click");
        assert_eq!(call.args["target"], "item 2");
    }

    #[test]
    fn rejects_unknown_action() {
        let err = parse_action("purchase[now]", &shop_space()).unwrap_err();
        assert!(matches!(err, ParseActionError::UnknownAction { ref action, .. } if action == "purchase"));
        assert_eq!(err.raw(), "purchase[now]");
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            parse_action("I think we should search", &shop_space()),
            Err(ParseActionError::Unparseable { .. })
        ));
        assert!(matches!(
            parse_action("search[x] trailing words", &shop_space()),
            Err(ParseActionError::Unparseable { .. })
        ));
    }

    #[test]
    fn brackets_nest_inside_single_args() {
        // The bracket body runs to the last `]`, so nested brackets in a
        // free-text argument survive.
        let space = vec![ActionSpec::think()];
        let call = parse_action("think[result[2] looks best]", &space).unwrap();
        assert_eq!(call.args["thought"], "result[2] looks best");
    }

    #[test]
    fn single_param_keeps_semicolons() {
        let space = vec![ActionSpec::think()];
        let call = parse_action("think[first search; then click; then buy]", &space).unwrap();
        assert_eq!(call.args["thought"], "first search; then click; then buy");
    }

    #[test]
    fn multi_param_splits_on_semicolon() {
        let space = vec![ActionSpec::new(
            "get_daily_high",
            "Daily high.",
            vec![ParamSpec::string("city"), ParamSpec::string("date")],
        )];
        let call = parse_action("get_daily_high[Oslo; 2024-01-03]", &space).unwrap();
        assert_eq!(call.args["city"], "Oslo");
        assert_eq!(call.args["date"], "2024-01-03");
    }

    #[test]
    fn arity_checked_against_schema() {
        let space = vec![ActionSpec::new(
            "pair",
            "Two args.",
            vec![ParamSpec::string("a"), ParamSpec::string("b")],
        )];
        let err = parse_action("pair[only one]", &space).unwrap_err();
        assert!(matches!(err, ParseActionError::ArityMismatch { got: 1, .. }));
        let err = parse_action("pair[a; b; c]", &space).unwrap_err();
        assert!(matches!(err, ParseActionError::ArityMismatch { got: 3, .. }));
    }

    #[test]
    fn integer_params_validated() {
        let space = vec![ActionSpec::new(
            "take",
            "Take n.",
            vec![ParamSpec {
                name: "n".into(),
                param_type: ParamType::Integer,
                required: true,
            }],
        )];
        assert!(parse_action("take[3]", &space).is_ok());
        assert!(matches!(
            parse_action("take[three]", &space),
            Err(ParseActionError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn enum_params_validated() {
        let space = vec![ActionSpec::new(
            "sort",
            "Sort direction.",
            vec![ParamSpec {
                name: "dir".into(),
                param_type: ParamType::Enum {
                    values: vec!["asc".into(), "desc".into()],
                },
                required: true,
            }],
        )];
        assert!(parse_action("sort[asc]", &space).is_ok());
        assert!(matches!(
            parse_action("sort[sideways]", &space),
            Err(ParseActionError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn action_label_prefix_tolerated() {
        let call = parse_action("Action: search[hat]", &shop_space()).unwrap();
        assert_eq!(call.action, "search");
    }

    #[test]
    fn zero_param_action_accepts_empty_brackets() {
        let space = vec![ActionSpec::new("list_stations", "List.", vec![])];
        let call = parse_action("list_stations[]", &space).unwrap();
        assert!(call.args.is_empty());
    }
}
