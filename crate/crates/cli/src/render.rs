//! JSON rendering of exact and decimal amounts.

use std::fs;
use std::path::Path;

use anyhow::Context;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use redistrib_core::Money;
use serde_json::{json, Value};

fn integer(x: &BigInt) -> Value {
    match x.to_i64() {
        Some(v) => json!(v),
        None => json!(x.to_string()),
    }
}

/// `[numerator, denominator]`; integers that overflow `i64` become strings.
pub fn exact(x: &BigRational) -> Value {
    json!([integer(x.numer()), integer(x.denom())])
}

pub fn exact_list(xs: &[BigRational]) -> Value {
    Value::Array(xs.iter().map(exact).collect())
}

pub fn decimal<M: Money>(x: &M) -> Value {
    json!(x.as_f64())
}

pub fn decimals<M: Money>(xs: &[M]) -> Value {
    Value::Array(xs.iter().map(decimal).collect())
}

/// Pretty JSON to `path`, or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, value: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
