//! JSON game documents.
//!
//! ```json
//! {
//!   "horizon": 3,
//!   "state_dim": 1,
//!   "players": [{"name": "leader", "control_dim": 1}, {"control_dim": 1}],
//!   "stage": {
//!     "A": [[1]], "B": [[[1]], [[1]]], "s": [0],
//!     "Q": [[[1]], [[1]]],
//!     "R": [[[[1]], [[0]]], [[[0]], [[1]]]],
//!     "x_target": [[0], [0]],
//!     "u_target": [[[0], [0]], [[0], [0]]]
//!   }
//! }
//! ```
//!
//! Matrices are row-major nested arrays and a bare number is accepted for any 1x1
//! matrix or length-1 vector. Either `"stages"` (one entry per stage) or `"stage"`
//! (broadcast to every stage) must be present. `"s"`, `"x_target"`, and `"u_target"`
//! default to zero. Errors carry the JSON pointer of the offending value.

use std::fmt;

use serde_json::{json, Map, Value};

use super::{GameSpec, Player, StageData};
use crate::numerics::{max_abs, Matrix, Vector, DEFAULT_TOLERANCE};

/// A schema violation located by a JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for DocumentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pointer = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{pointer}: {}", self.message)
    }
}

impl std::error::Error for DocumentError {}

type DocResult<T> = std::result::Result<T, DocumentError>;

fn fail<T>(pointer: &str, message: impl Into<String>) -> DocResult<T> {
    Err(DocumentError {
        pointer: pointer.to_string(),
        message: message.into(),
    })
}

fn child(pointer: &str, key: impl fmt::Display) -> String {
    format!("{pointer}/{key}")
}

fn field<'a>(obj: &'a Map<String, Value>, pointer: &str, key: &str) -> DocResult<&'a Value> {
    obj.get(key)
        .ok_or_else(|| DocumentError {
            pointer: child(pointer, key),
            message: format!("missing field \"{key}\""),
        })
}

fn as_object<'a>(value: &'a Value, pointer: &str) -> DocResult<&'a Map<String, Value>> {
    value.as_object().ok_or_else(|| DocumentError {
        pointer: pointer.to_string(),
        message: "expected an object".into(),
    })
}

fn as_array<'a>(value: &'a Value, pointer: &str) -> DocResult<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| DocumentError {
        pointer: pointer.to_string(),
        message: "expected an array".into(),
    })
}

fn as_count(value: &Value, pointer: &str, name: &str) -> DocResult<usize> {
    match value.as_u64() {
        Some(v) if v >= 1 => Ok(v as usize),
        _ => fail(pointer, format!("{name} must be a positive integer")),
    }
}

fn as_number(value: &Value, pointer: &str) -> DocResult<f64> {
    match value.as_f64() {
        Some(v) if v.is_finite() => Ok(v),
        _ => fail(pointer, "expected a finite number"),
    }
}

fn parse_matrix(value: &Value, pointer: &str, name: &str, shape: (usize, usize)) -> DocResult<Matrix> {
    if value.is_number() {
        if shape != (1, 1) {
            return fail(pointer, format!("{name} must be a {}x{} matrix", shape.0, shape.1));
        }
        return Ok(Matrix::from_element(1, 1, as_number(value, pointer)?));
    }
    let rows = as_array(value, pointer)?;
    let mut data = Vec::new();
    let mut width = None;
    for (r, row) in rows.iter().enumerate() {
        let row_ptr = child(pointer, r);
        let entries = as_array(row, &row_ptr)?;
        match width {
            None => width = Some(entries.len()),
            Some(w) if w != entries.len() => {
                return fail(&row_ptr, format!("{name} rows have unequal lengths"))
            }
            _ => {}
        }
        for (c, entry) in entries.iter().enumerate() {
            data.push(as_number(entry, &child(&row_ptr, c))?);
        }
    }
    let found = (rows.len(), width.unwrap_or(0));
    if shape.0 == shape.1 && found.0 != found.1 {
        return fail(pointer, format!("{name} must be square"));
    }
    if found != shape {
        return fail(
            pointer,
            format!(
                "{name} is {}x{}, expected {}x{}",
                found.0, found.1, shape.0, shape.1
            ),
        );
    }
    Ok(Matrix::from_row_slice(found.0, found.1, &data))
}

fn parse_symmetric(value: &Value, pointer: &str, name: &str, dim: usize) -> DocResult<Matrix> {
    let m = parse_matrix(value, pointer, name, (dim, dim))?;
    if max_abs(&(&m - m.transpose())) > DEFAULT_TOLERANCE * (1.0 + max_abs(&m)) {
        return fail(pointer, format!("{name} must be symmetric"));
    }
    Ok((&m + m.transpose()) * 0.5)
}

fn parse_vector(value: &Value, pointer: &str, name: &str, len: usize) -> DocResult<Vector> {
    if value.is_number() {
        if len != 1 {
            return fail(pointer, format!("{name} must have length {len}"));
        }
        return Ok(Vector::from_element(1, as_number(value, pointer)?));
    }
    let entries = as_array(value, pointer)?;
    if entries.len() != len {
        return fail(
            pointer,
            format!("{name} has length {}, expected {len}", entries.len()),
        );
    }
    let data = entries
        .iter()
        .enumerate()
        .map(|(k, v)| as_number(v, &child(pointer, k)))
        .collect::<DocResult<Vec<f64>>>()?;
    Ok(Vector::from_vec(data))
}

fn per_player<'a>(value: &'a Value, pointer: &str, name: &str, n: usize) -> DocResult<&'a Vec<Value>> {
    let list = as_array(value, pointer)?;
    if list.len() != n {
        return fail(
            pointer,
            format!("{name} has {} entries, expected one per player ({n})", list.len()),
        );
    }
    Ok(list)
}

fn parse_stage(value: &Value, pointer: &str, p: usize, dims: &[usize]) -> DocResult<StageData> {
    let obj = as_object(value, pointer)?;
    let n = dims.len();
    let mut stage = StageData::zeros(p, dims);
    stage.a = parse_matrix(field(obj, pointer, "A")?, &child(pointer, "A"), "A", (p, p))?;

    let b_ptr = child(pointer, "B");
    for (j, b) in per_player(field(obj, pointer, "B")?, &b_ptr, "B", n)?.iter().enumerate() {
        stage.b[j] = parse_matrix(b, &child(&b_ptr, j), "B", (p, dims[j]))?;
    }
    if let Some(s) = obj.get("s") {
        stage.s = parse_vector(s, &child(pointer, "s"), "s", p)?;
    }
    let q_ptr = child(pointer, "Q");
    for (i, q) in per_player(field(obj, pointer, "Q")?, &q_ptr, "Q", n)?.iter().enumerate() {
        stage.q[i] = parse_symmetric(q, &child(&q_ptr, i), "Q", p)?;
    }
    let r_ptr = child(pointer, "R");
    for (i, row) in per_player(field(obj, pointer, "R")?, &r_ptr, "R", n)?.iter().enumerate() {
        let row_ptr = child(&r_ptr, i);
        for (j, r) in per_player(row, &row_ptr, "R row", n)?.iter().enumerate() {
            stage.r[i][j] = parse_symmetric(r, &child(&row_ptr, j), "R", dims[j])?;
        }
    }
    if let Some(xt) = obj.get("x_target") {
        let xt_ptr = child(pointer, "x_target");
        for (i, x) in per_player(xt, &xt_ptr, "x_target", n)?.iter().enumerate() {
            stage.x_target[i] = parse_vector(x, &child(&xt_ptr, i), "x_target", p)?;
        }
    }
    if let Some(ut) = obj.get("u_target") {
        let ut_ptr = child(pointer, "u_target");
        for (i, row) in per_player(ut, &ut_ptr, "u_target", n)?.iter().enumerate() {
            let row_ptr = child(&ut_ptr, i);
            for (j, u) in per_player(row, &row_ptr, "u_target row", n)?.iter().enumerate() {
                stage.u_target[i][j] = parse_vector(u, &child(&row_ptr, j), "u_target", dims[j])?;
            }
        }
    }
    Ok(stage)
}

/// Parses a game document from a JSON value.
pub fn game_from_value(doc: &Value) -> DocResult<GameSpec> {
    let root = as_object(doc, "")?;
    let horizon = as_count(field(root, "", "horizon")?, "/horizon", "horizon")?;
    let p = as_count(field(root, "", "state_dim")?, "/state_dim", "state_dim")?;
    let players_value = as_array(field(root, "", "players")?, "/players")?;
    if players_value.is_empty() {
        return fail("/players", "at least one player is required");
    }
    let mut players = Vec::with_capacity(players_value.len());
    for (i, pv) in players_value.iter().enumerate() {
        let ptr = child("/players", i);
        let obj = as_object(pv, &ptr)?;
        let control_dim = as_count(
            field(obj, &ptr, "control_dim")?,
            &child(&ptr, "control_dim"),
            "control_dim",
        )?;
        let name = match obj.get("name") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return fail(&child(&ptr, "name"), "name must be a string"),
        };
        players.push(Player { name, control_dim });
    }
    let dims: Vec<usize> = players.iter().map(|p| p.control_dim).collect();

    let stages = match (root.get("stages"), root.get("stage")) {
        (Some(_), Some(_)) => return fail("/stage", "give either \"stage\" or \"stages\", not both"),
        (None, None) => return fail("/stages", "missing field \"stages\" (or \"stage\")"),
        (None, Some(single)) => vec![parse_stage(single, "/stage", p, &dims)?; horizon],
        (Some(list), None) => {
            let entries = as_array(list, "/stages")?;
            if entries.len() != horizon {
                return fail(
                    "/stages",
                    format!("{} stages given for horizon {horizon}", entries.len()),
                );
            }
            entries
                .iter()
                .enumerate()
                .map(|(t, s)| parse_stage(s, &child("/stages", t), p, &dims))
                .collect::<DocResult<Vec<_>>>()?
        }
    };
    Ok(GameSpec {
        horizon,
        state_dim: p,
        players,
        stages,
    })
}

/// Parses a game document from JSON text.
pub fn game_from_str(text: &str) -> DocResult<GameSpec> {
    let doc: Value = serde_json::from_str(text).map_err(|e| DocumentError {
        pointer: String::new(),
        message: format!("malformed JSON: {e}"),
    })?;
    game_from_value(&doc)
}

fn matrix_value(m: &Matrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|c| json!(m[(r, c)])).collect()))
            .collect(),
    )
}

fn vector_value(v: &Vector) -> Value {
    Value::Array(v.iter().map(|x| json!(x)).collect())
}

/// Serializes a game with one explicit entry per stage.
pub fn game_to_value(spec: &GameSpec) -> Value {
    let players: Vec<Value> = spec
        .players
        .iter()
        .map(|p| match &p.name {
            Some(name) => json!({"name": name, "control_dim": p.control_dim}),
            None => json!({"control_dim": p.control_dim}),
        })
        .collect();
    let stages: Vec<Value> = spec
        .stages
        .iter()
        .map(|s| {
            json!({
                "A": matrix_value(&s.a),
                "B": s.b.iter().map(matrix_value).collect::<Vec<_>>(),
                "s": vector_value(&s.s),
                "Q": s.q.iter().map(matrix_value).collect::<Vec<_>>(),
                "R": s.r.iter().map(|row| row.iter().map(matrix_value).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "x_target": s.x_target.iter().map(vector_value).collect::<Vec<_>>(),
                "u_target": s.u_target.iter().map(|row| row.iter().map(vector_value).collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "horizon": spec.horizon,
        "state_dim": spec.state_dim,
        "players": players,
        "stages": stages,
    })
}

/// Serializes a game to pretty-printed JSON text.
pub fn game_to_string(spec: &GameSpec) -> String {
    serde_json::to_string_pretty(&game_to_value(spec)).expect("game documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "horizon": 2, "state_dim": 1,
        "players": [{"control_dim": 1}],
        "stages": [
            {"A": [[1]], "B": [[[1]]], "Q": [[[1]]], "R": [[[[1]]]]},
            {"A": 0.5, "B": [1], "Q": [2], "R": [[3]]}
        ]
    }"#;

    #[test]
    fn minimal_document_defaults_to_zero() {
        let spec = game_from_str(MINIMAL).unwrap();
        assert_eq!(spec.horizon, 2);
        assert!(spec.is_linear_quadratic());
        assert_eq!(spec.stages[1].a[(0, 0)], 0.5);
        assert_eq!(spec.stages[1].r[0][0][(0, 0)], 3.0);
    }

    #[test]
    fn singular_stage_is_broadcast() {
        let text = r#"{"horizon": 5, "state_dim": 1, "players": [{"control_dim": 1}],
            "stage": {"A": 1, "B": [1], "Q": [1], "R": [[1]], "s": [0.3]}}"#;
        let spec = game_from_str(text).unwrap();
        assert_eq!(spec.stages.len(), 5);
        assert!(spec.stages.iter().all(|s| *s == spec.stages[0]));
        assert_eq!(spec.stages[4].s[0], 0.3);
    }

    #[test]
    fn non_square_weight_names_pointer() {
        let text = r#"{"horizon": 1, "state_dim": 2, "players": [{"control_dim": 1}],
            "stage": {"A": [[1,0],[0,1]], "B": [[[1],[0]]], "Q": [[[1,0,0],[0,1,0]]], "R": [[1]]}}"#;
        let err = game_from_str(text).unwrap_err();
        assert_eq!(err.pointer, "/stage/Q/0");
        assert_eq!(err.message, "Q must be square");
    }

    #[test]
    fn missing_field_names_pointer() {
        let text = r#"{"horizon": 1, "state_dim": 1, "players": [{"control_dim": 1}],
            "stages": [{"A": 1, "B": [1], "Q": [1]}]}"#;
        let err = game_from_str(text).unwrap_err();
        assert_eq!(err.pointer, "/stages/0/R");
    }

    #[test]
    fn zero_horizon_rejected() {
        let text = r#"{"horizon": 0, "state_dim": 1, "players": [{"control_dim": 1}], "stages": []}"#;
        assert_eq!(game_from_str(text).unwrap_err().pointer, "/horizon");
    }

    #[test]
    fn round_trip_is_exact() {
        let mut spec = game_from_str(MINIMAL).unwrap();
        spec.stages[0].a[(0, 0)] = 0.1 + 0.2;
        spec.stages[1].x_target[0][0] = -1.0 / 3.0;
        let back = game_from_str(&game_to_string(&spec)).unwrap();
        assert_eq!(back, spec);
    }
}
