//! Integer ids that also appear as JSON object keys, where they arrive as strings.

use std::fmt;

use serde::de::{self, Visitor};

struct IndexVisitor(u64);

impl Visitor<'_> for IndexVisitor {
    type Value = u64;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "an integer id in 0..={}", self.0)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
        if v <= self.0 {
            Ok(v)
        } else {
            Err(E::invalid_value(de::Unexpected::Unsigned(v), &self))
        }
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
        u64::try_from(v).map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self)).and_then(|v| self.visit_u64(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
        let n: u64 = v.parse().map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))?;
        self.visit_u64(n)
    }
}

pub(crate) fn deserialize_index<'de, D: de::Deserializer<'de>>(d: D, max: u64) -> Result<u64, D::Error> {
    d.deserialize_any(IndexVisitor(max))
}
