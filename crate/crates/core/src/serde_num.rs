//! Serialization of reals that may be infinite or undefined.
//!
//! JSON has no representation for non-finite numbers, so these are written
//! as the strings `"inf"`, `"-inf"` and `"nan"`.

use serde::Serializer;

pub fn tagged<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn tagged_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => tagged(v, s),
        None => s.serialize_none(),
    }
}
