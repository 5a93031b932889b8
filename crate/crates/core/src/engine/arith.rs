//! Integer arithmetic and the standard order of terms.

use std::cmp::Ordering;

use super::{Engine, Exception};
use crate::term::Term;

fn eval_error(what: &str) -> Exception {
    Exception::of("evaluation_error", vec![Term::atom(what)])
}

fn overflow() -> Exception {
    eval_error("int_overflow")
}

pub fn eval(e: &Engine, t: &Term) -> Result<i64, Exception> {
    let t = e.walk(t);
    match &t {
        Term::Int(i) => Ok(*i),
        Term::Var(_) => Err(Exception::instantiation()),
        Term::Atom(a) => match a.as_str() {
            "max_tagged_integer" => Ok(i64::MAX),
            "min_tagged_integer" => Ok(i64::MIN),
            _ => Err(not_evaluable(&t)),
        },
        Term::Struct(c) => {
            let name = c.name.as_str();
            if c.args.len() == 1 {
                let x = eval(e, &c.args[0])?;
                return match name {
                    "-" => x.checked_neg().ok_or_else(overflow),
                    "+" => Ok(x),
                    "abs" => x.checked_abs().ok_or_else(overflow),
                    "sign" => Ok(x.signum()),
                    "\\" => Ok(!x),
                    "succ" => x.checked_add(1).ok_or_else(overflow),
                    _ => Err(not_evaluable(&t)),
                };
            }
            if c.args.len() != 2 {
                return Err(not_evaluable(&t));
            }
            let x = eval(e, &c.args[0])?;
            let y = eval(e, &c.args[1])?;
            let zero = || eval_error("zero_divisor");
            match name {
                "+" => x.checked_add(y).ok_or_else(overflow),
                "-" => x.checked_sub(y).ok_or_else(overflow),
                "*" => x.checked_mul(y).ok_or_else(overflow),
                "//" | "/" => {
                    if y == 0 {
                        Err(zero())
                    } else {
                        x.checked_div(y).ok_or_else(overflow)
                    }
                }
                "mod" => {
                    if y == 0 {
                        Err(zero())
                    } else {
                        x.checked_rem_euclid(y).map(|r| if y < 0 && r != 0 { r + y } else { r }).ok_or_else(overflow)
                    }
                }
                "rem" => {
                    if y == 0 {
                        Err(zero())
                    } else {
                        x.checked_rem(y).ok_or_else(overflow)
                    }
                }
                "min" => Ok(x.min(y)),
                "max" => Ok(x.max(y)),
                "<<" => Ok(x.checked_shl(y as u32).unwrap_or(0)),
                ">>" => Ok(x >> (y.clamp(0, 63))),
                "/\\" => Ok(x & y),
                "\\/" => Ok(x | y),
                "xor" => Ok(x ^ y),
                "**" | "^" => {
                    if y < 0 {
                        Err(eval_error("undefined"))
                    } else {
                        x.checked_pow(u32::try_from(y).map_err(|_| overflow())?).ok_or_else(overflow)
                    }
                }
                _ => Err(not_evaluable(&t)),
            }
        }
    }
}

fn not_evaluable(t: &Term) -> Exception {
    let (name, arity) = t.functor().expect("callable");
    Exception::of("type_error", vec![Term::atom("evaluable"), Term::indicator(name, arity)])
}

/// Standard order: variables < integers < atoms < compound terms.
pub fn compare(e: &Engine, a: &Term, b: &Term) -> Ordering {
    let a = e.walk(a);
    let b = e.walk(b);
    fn rank(t: &Term) -> u8 {
        match t {
            Term::Var(_) => 0,
            Term::Int(_) => 1,
            Term::Atom(_) => 2,
            Term::Struct(_) => 3,
        }
    }
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) => x.0.cmp(&y.0),
        (Term::Int(x), Term::Int(y)) => x.cmp(y),
        (Term::Atom(x), Term::Atom(y)) => x.as_str().cmp(y.as_str()),
        (Term::Struct(x), Term::Struct(y)) => {
            x.args.len().cmp(&y.args.len()).then_with(|| x.name.as_str().cmp(y.name.as_str())).then_with(|| {
                for (p, q) in x.args.iter().zip(y.args.iter()) {
                    let o = compare(e, p, q);
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            })
        }
        _ => rank(&a).cmp(&rank(&b)),
    }
}
