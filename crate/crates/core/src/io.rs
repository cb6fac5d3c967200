//! Deterministic number formatting for JSON and CSV output.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Significant digits kept in every emitted number.
pub const SIG_DIGITS: usize = 12;

/// Round to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = format!("{:.*e}", SIG_DIGITS - 1, x);
    s.parse().unwrap_or(x)
}

/// Shortest decimal text of `round_sig(x)`; `-0` prints as `0`. Magnitudes
/// outside `[1e-4, 1e15)` use exponent notation.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        return "0".into();
    }
    if r.is_finite() && (r.abs() < 1e-4 || r.abs() >= 1e15) {
        return format!("{r:e}");
    }
    format!("{r}")
}

fn round_value(v: Value) -> Result<Value> {
    Ok(match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => {
                if !x.is_finite() {
                    return Err(Error::NumericalFailure("non-finite number in output".into()));
                }
                serde_json::Number::from_f64(round_sig(x)).map(Value::Number).unwrap_or(Value::Null)
            }
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect::<Result<_>>()?),
        Value::Object(o) => {
            Value::Object(o.into_iter().map(|(k, v)| round_value(v).map(|v| (k, v))).collect::<Result<_>>()?)
        }
        other => other,
    })
}

/// Pretty JSON with every float rounded to 12 significant digits.
///
/// Non-finite numbers are rejected rather than written as `null`; absent
/// optional fields must use `skip_serializing_if`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::NumericalFailure(format!("serialization: {e}")))?;
    if contains_null_float(&v) {
        return Err(Error::NumericalFailure("non-finite number in output".into()));
    }
    let v = round_value(v)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::NumericalFailure(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

// serde_json maps NaN and infinities to null; optional fields are always
// skipped when absent, so any null means a non-finite number.
fn contains_null_float(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::Array(a) => a.iter().any(contains_null_float),
        Value::Object(o) => o.values().any(contains_null_float),
        _ => false,
    }
}

/// `Serialize` helper for matrices as row-major nested arrays.
pub mod matrix_rows {
    use crate::linmat::Matrix;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(crate::sysmodel::matrix_to_rows(m))
    }
}

/// As [`matrix_rows`] for optional matrices.
pub mod opt_matrix_rows {
    use crate::linmat::Matrix;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => s.collect_seq(crate::sysmodel::matrix_to_rows(m)),
            None => s.serialize_none(),
        }
    }
}
