//! Exact rational helpers.
//!
//! All payoff arithmetic uses [`Rational`], a 128-bit ratio. Input data is
//! restricted to 64-bit numerators and denominators; the wider
//! representation leaves headroom for products and sums.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = Ratio<i128>;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(v as i128)
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(num as i128, den as i128)
}

pub fn to_f64(r: &Rational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

/// Checks that both parts of a rational fit the 64-bit input contract.
pub fn fits_i64(r: &Rational) -> bool {
    i64::try_from(*r.numer()).is_ok() && i64::try_from(*r.denom()).is_ok()
}

/// Least common multiple of the denominators, i.e. the smallest positive
/// integer turning every value into an integer.
pub fn denominator_lcm<'a>(values: impl IntoIterator<Item = &'a Rational>) -> i128 {
    values.into_iter().fold(1i128, |acc, v| acc.lcm(v.denom()))
}

/// Best-effort conversion of a solver float into an exact rational with a
/// bounded denominator. Used only for continuous columns.
pub fn from_f64(v: f64) -> Rational {
    if v == 0.0 || !v.is_finite() {
        return Rational::zero();
    }
    let den: i128 = 1 << 40;
    let num = (v * den as f64).round() as i128;
    Rational::new(num, den)
}

pub fn abs(r: &Rational) -> Rational {
    r.abs()
}

/// Serializes a rational as the string `"num/den"` (or `"num"`).
pub fn to_string(r: &Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i128 = n.trim().parse().ok()?;
            let d: i128 = d.trim().parse().ok()?;
            (d != 0).then(|| Rational::new(n, d))
        }
        None => s.parse::<i128>().ok().map(Rational::from_integer),
    }
}

/// `serde(with = ...)` adapter writing rationals as strings.
pub mod as_string {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        to_string(r).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad rational {s:?}")))
    }
}

/// Same as [`as_string`] for optional values.
pub mod opt_as_string {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        r.as_ref().map(to_string).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        match s {
            None => Ok(None),
            Some(s) => parse(&s)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("bad rational {s:?}"))),
        }
    }
}

/// Input wrapper accepting JSON integers or `"num/den"` strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exact(pub Rational);

impl From<Rational> for Exact {
    fn from(r: Rational) -> Self {
        Exact(r)
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if *self.0.denom() == 1 {
            if let Ok(v) = i64::try_from(*self.0.numer()) {
                return v.serialize(s);
            }
        }
        to_string(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Exact, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Exact(int(v))),
            Raw::Text(t) => parse(&t)
                .map(Exact)
                .ok_or_else(|| serde::de::Error::custom(format!("bad rational {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcm_of_denominators() {
        let vals = [ratio(1, 2), ratio(2, 3), int(5), ratio(3, 4)];
        assert_eq!(denominator_lcm(vals.iter()), 12);
    }

    #[test]
    fn string_roundtrip() {
        for r in [ratio(8, 5), int(-3), ratio(-7, 20), Rational::zero()] {
            assert_eq!(parse(&to_string(&r)), Some(r));
        }
        assert_eq!(parse("1/0"), None);
        assert_eq!(parse("x"), None);
    }

    #[test]
    fn exact_accepts_integers_and_strings() {
        let v: Vec<Exact> = serde_json::from_str(r#"[3, "-7/2", "4/2"]"#).unwrap();
        assert_eq!(v, vec![Exact(int(3)), Exact(ratio(-7, 2)), Exact(int(2))]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[3,"-7/2",2]"#);
        assert!(serde_json::from_str::<Exact>("1.5").is_err());
    }
}
