//! Cost of calling each candidate model on a query.

use serde::{Deserialize, Serialize};

use crate::data::Query;
use crate::error::{Error, Result};

/// Per-model token pricing: `c_in * tokens_in + c_out * tokens_out + c_fix`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenPrice {
    pub c_in: f64,
    pub c_out: f64,
    pub c_fix: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostModel {
    /// `C_p = 1`, `C_a = 0` for every query.
    #[default]
    Binary,
    TokenBased { p: TokenPrice, a: TokenPrice },
}

impl CostModel {
    pub fn validate(&self, key: &str) -> Result<()> {
        if let CostModel::TokenBased { p, a } = self {
            for (name, price) in [("p", p), ("a", a)] {
                for (field, v) in [("c_in", price.c_in), ("c_out", price.c_out), ("c_fix", price.c_fix)] {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::config(format!("{key}.{name}.{field}"), "must be finite and >= 0"));
                    }
                }
            }
        }
        Ok(())
    }

    /// `(C_p(q), C_a(q))`. Token counts are required only where their
    /// price is nonzero.
    pub fn costs(&self, q: &Query) -> Result<(f64, f64)> {
        match self {
            CostModel::Binary => Ok((1.0, 0.0)),
            CostModel::TokenBased { p, a } => Ok((
                token_cost(p, q.tokens_in, q.tokens_out_p, q, "tokens_out_p")?,
                token_cost(a, q.tokens_in, q.tokens_out_a, q, "tokens_out_a")?,
            )),
        }
    }

    pub fn cost_gap(&self, q: &Query) -> Result<f64> {
        let (cp, ca) = self.costs(q)?;
        Ok(cp - ca)
    }
}

fn token_cost(price: &TokenPrice, tin: Option<u64>, tout: Option<u64>, q: &Query, out_name: &str) -> Result<f64> {
    let count = |coef: f64, n: Option<u64>, name: &str| -> Result<f64> {
        match (coef, n) {
            (0.0, _) => Ok(0.0),
            (c, Some(n)) => Ok(c * n as f64),
            (_, None) => Err(Error::MissingMetadata(format!("query `{}` has no {name}", q.id))),
        }
    };
    Ok(count(price.c_in, tin, "tokens_in")? + count(price.c_out, tout, out_name)? + price.c_fix)
}
