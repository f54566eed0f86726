//! Plain-text dump of a [`ConicProblem`].
//!
//! ```text
//! envforge-conic 1
//! sense maximize
//! var L[0] 0 inf
//! objective 0 0 1
//! row le 5 0 0 1 | robust[0]
//! cone 2 | ball[0]
//! head 0 1 1
//! tail 0 0 2
//! tail 1
//! ```
//!
//! Affine expressions are written as `<constant> (<var index> <coef>)*`.
//! Floats use Rust's shortest round-trip formatting, so a dump parses back to
//! an identical problem.

use std::fmt::Write as _;

use super::{AffineExpr, ConeBlock, ConeKind, ConicProblem, LinearRow, Relation, Sense, VarId, Variable};
use crate::error::{Error, Result};

const MAGIC: &str = "envforge-conic 1";

fn write_expr(out: &mut String, e: &AffineExpr) {
    write!(out, "{}", e.constant).unwrap();
    for &(v, c) in &e.terms {
        write!(out, " {} {}", v.0, c).unwrap();
    }
}

pub fn write_text(problem: &ConicProblem) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    let sense = match problem.sense {
        Sense::Minimize => "minimize",
        Sense::Maximize => "maximize",
    };
    writeln!(out, "sense {sense}").unwrap();
    for v in &problem.variables {
        let name: String = v.name.split_whitespace().collect::<Vec<_>>().join("_");
        writeln!(out, "var {name} {} {}", v.lower, v.upper).unwrap();
    }
    out.push_str("objective ");
    write_expr(&mut out, &problem.objective);
    out.push('\n');
    for r in &problem.rows {
        let rel = match r.relation {
            Relation::LessEq => "le",
            Relation::Equal => "eq",
        };
        write!(out, "row {rel} {} ", r.rhs).unwrap();
        write_expr(&mut out, &r.expr);
        writeln!(out, " | {}", r.label.replace('\n', " ")).unwrap();
    }
    for c in &problem.cones {
        writeln!(out, "cone {} | {}", c.tail.len(), c.label.replace('\n', " ")).unwrap();
        out.push_str("head ");
        write_expr(&mut out, &c.head);
        out.push('\n');
        for t in &c.tail {
            out.push_str("tail ");
            write_expr(&mut out, t);
            out.push('\n');
        }
    }
    out
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num(tok: Option<&str>, line: usize, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse::<f64>()
        .map_err(|_| perr(line, format!("invalid {what} `{tok}`")))
}

fn parse_expr<'a>(mut toks: impl Iterator<Item = &'a str>, line: usize) -> Result<AffineExpr> {
    let constant = num(toks.next(), line, "constant")?;
    let mut terms = Vec::new();
    while let Some(idx) = toks.next() {
        let idx: usize = idx
            .parse()
            .map_err(|_| perr(line, format!("invalid variable index `{idx}`")))?;
        let coef = num(toks.next(), line, "coefficient")?;
        terms.push((VarId(idx), coef));
    }
    Ok(AffineExpr { terms, constant })
}

fn split_label(rest: &str) -> (&str, String) {
    match rest.split_once(" | ") {
        Some((body, label)) => (body, label.to_string()),
        None => (rest.trim_end_matches(" |"), String::new()),
    }
}

pub fn parse_text(text: &str) -> Result<ConicProblem> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(perr(1, format!("expected header `{MAGIC}`"))),
    }
    let mut problem: Option<ConicProblem> = None;
    let mut pending_cone: Option<(ConeBlock, usize, bool)> = None;

    let finish_cone = |problem: &mut ConicProblem, pending: &mut Option<(ConeBlock, usize, bool)>, line: usize| -> Result<()> {
        if let Some((cone, want, has_head)) = pending.take() {
            if !has_head || cone.tail.len() != want {
                return Err(perr(line, format!("cone `{}` is incomplete", cone.label)));
            }
            problem.cones.push(cone);
        }
        Ok(())
    };

    for (ln, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (kw, rest) = line.split_once(' ').unwrap_or((line, ""));
        if kw == "sense" {
            let sense = match rest.trim() {
                "minimize" => Sense::Minimize,
                "maximize" => Sense::Maximize,
                other => return Err(perr(ln, format!("unknown sense `{other}`"))),
            };
            problem = Some(ConicProblem::new(sense));
            continue;
        }
        let p = problem
            .as_mut()
            .ok_or_else(|| perr(ln, "`sense` must come first"))?;
        match kw {
            "head" | "tail" => {
                let (cone, _, has_head) = pending_cone
                    .as_mut()
                    .ok_or_else(|| perr(ln, format!("`{kw}` outside a cone")))?;
                let e = parse_expr(rest.split_whitespace(), ln)?;
                if kw == "head" {
                    if *has_head {
                        return Err(perr(ln, "cone has two heads"));
                    }
                    cone.head = e;
                    *has_head = true;
                } else {
                    cone.tail.push(e);
                }
                continue;
            }
            _ => finish_cone(p, &mut pending_cone, ln)?,
        }
        match kw {
            "var" => {
                let mut t = rest.split_whitespace();
                let name = t.next().ok_or_else(|| perr(ln, "missing variable name"))?;
                let lower = num(t.next(), ln, "lower bound")?;
                let upper = num(t.next(), ln, "upper bound")?;
                p.variables.push(Variable {
                    name: name.to_string(),
                    lower,
                    upper,
                });
            }
            "objective" => p.objective = parse_expr(rest.split_whitespace(), ln)?,
            "row" => {
                let (body, label) = split_label(rest);
                let mut t = body.split_whitespace();
                let relation = match t.next() {
                    Some("le") => Relation::LessEq,
                    Some("eq") => Relation::Equal,
                    other => return Err(perr(ln, format!("unknown relation {other:?}"))),
                };
                let rhs = num(t.next(), ln, "rhs")?;
                let expr = parse_expr(t, ln)?;
                p.rows.push(LinearRow {
                    label,
                    expr,
                    relation,
                    rhs,
                });
            }
            "cone" => {
                let (body, label) = split_label(rest);
                let want: usize = body
                    .trim()
                    .parse()
                    .map_err(|_| perr(ln, format!("invalid cone size `{body}`")))?;
                pending_cone = Some((
                    ConeBlock {
                        label,
                        kind: ConeKind::SecondOrder,
                        head: AffineExpr::new(),
                        tail: Vec::new(),
                    },
                    want,
                    false,
                ));
            }
            other => return Err(perr(ln, format!("unknown keyword `{other}`"))),
        }
    }
    let mut p = problem.ok_or_else(|| perr(1, "missing `sense` line"))?;
    finish_cone(&mut p, &mut pending_cone, text.lines().count())?;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, Just(0.0), Just(1e-300), Just(-3.0e12)]
    }

    fn expr(nvars: usize) -> impl Strategy<Value = AffineExpr> {
        (finite(), prop::collection::vec((0..nvars, finite()), 0..4)).prop_map(|(c, t)| AffineExpr {
            constant: c,
            terms: t.into_iter().map(|(v, k)| (VarId(v), k)).collect(),
        })
    }

    fn problem() -> impl Strategy<Value = ConicProblem> {
        (1usize..5).prop_flat_map(|n| {
            (
                any::<bool>(),
                prop::collection::vec((finite(), prop::option::of(finite())), n),
                expr(n),
                prop::collection::vec((expr(n), finite(), any::<bool>(), "[a-z \\[\\]0-9]{0,8}"), 0..4),
                prop::collection::vec((expr(n), prop::collection::vec(expr(n), 1..3), "[a-z]{0,5}"), 0..3),
            )
                .prop_map(move |(max, bounds, obj, rows, cones)| {
                    let mut p = ConicProblem::new(if max { Sense::Maximize } else { Sense::Minimize });
                    for (i, (lo, hi)) in bounds.into_iter().enumerate() {
                        let hi = hi.map_or(f64::INFINITY, |h| lo.max(h));
                        p.add_var(format!("x[{i}]"), if i % 2 == 0 { lo } else { f64::NEG_INFINITY }, hi);
                    }
                    p.objective = obj;
                    for (e, rhs, eq, label) in rows {
                        p.add_row(label.trim().to_string(), e, if eq { Relation::Equal } else { Relation::LessEq }, rhs);
                    }
                    for (h, t, label) in cones {
                        p.add_soc(label, h, t);
                    }
                    p
                })
        })
    }

    proptest! {
        #[test]
        fn dump_round_trips(p in problem()) {
            let text = write_text(&p);
            let back = parse_text(&text).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_text("hello").is_err());
        assert!(parse_text("envforge-conic 1\nvar x 0 1\n").is_err());
        assert!(parse_text("envforge-conic 1\nsense maximize\nrow lt 1 0 | x\n").is_err());
        assert!(parse_text("envforge-conic 1\nsense maximize\nvar x 0 1\ncone 2 | c\nhead 0 0 1\ntail 1\n").is_err());
    }
}
