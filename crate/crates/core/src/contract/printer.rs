//! Canonical source form. Contracts are stored on chain in exactly this
//! form, so the printer output is part of the hashed data.

use std::fmt::{self, Display, Write};

use super::ast::*;

/// One line, single spaces, trailing newline.
pub fn print<O: Display>(ast: &ContractAst<O>) -> String {
    let mut out = String::new();
    write_contract(&mut out, ast).expect("writing to a String cannot fail");
    out.push('\n');
    out
}

fn write_contract<O: Display>(out: &mut String, ast: &ContractAst<O>) -> fmt::Result {
    match ast {
        ContractAst::Recognition(r) => {
            write!(out, "RECOGNITION BETWEEN {} AND {} WHERE ", r.home, r.foreign)?;
            write_predicate(out, &r.predicate)?;
            write!(out, " MAP FACTOR {}", r.factor)?;
            for (from, to) in &r.topic_map {
                write!(out, " TOPIC {from} -> {to}")?;
            }
            Ok(())
        }
        ContractAst::Degree(d) => {
            write!(out, "DEGREE {} BY {} REQUIRES ", quote(&d.degree_name), d.issuer)?;
            write_requirement(out, &d.requirement)
        }
        ContractAst::Sanction(s) => write!(out, "SANCTION THRESHOLD {} WINDOW {}", s.threshold, s.window),
    }
}

pub(crate) fn write_predicate<O: Display>(out: &mut String, p: &Predicate<O>) -> fmt::Result {
    for (i, atom) in p.atoms.iter().enumerate() {
        if i > 0 {
            out.push_str(" AND ");
        }
        match atom {
            Atom::IssuerEquals(o) => write!(out, "ISSUER = {o}")?,
            Atom::TopicContains(t) => write!(out, "TOPIC CONTAINS {t}")?,
            Atom::CreditsAtLeast(c) => write!(out, "CREDITS >= {c}")?,
            Atom::Passed => out.push_str("PASSED"),
            Atom::SourceIn(kinds) => {
                let list: Vec<_> = kinds.iter().map(|k| k.keyword()).collect();
                write!(out, "SOURCE IN ({})", list.join(", "))?;
            }
        }
    }
    Ok(())
}

pub(crate) fn write_requirement<O: Display>(out: &mut String, r: &Requirement<O>) -> fmt::Result {
    let list = |out: &mut String, children: &[Requirement<O>]| -> fmt::Result {
        out.push('(');
        for (i, c) in children.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_requirement(out, c)?;
        }
        out.push(')');
        Ok(())
    };
    match r {
        Requirement::CreditsAtLeast { amount, topic } => write!(out, "CREDITS >= {amount} IN {topic}"),
        Requirement::Course { course_id, issuer } => {
            write!(out, "COURSE {}", quote(course_id))?;
            if let Some(o) = issuer {
                write!(out, " FROM {o}")?;
            }
            Ok(())
        }
        Requirement::AllOf(c) => {
            out.push_str("ALL");
            list(out, c)
        }
        Requirement::AnyOf(c) => {
            out.push_str("ANY");
            list(out, c)
        }
        Requirement::AtLeastNOf { n, children } => {
            write!(out, "ATLEAST {n} OF ")?;
            list(out, children)
        }
    }
}

/// Renders a single requirement (used for progress reports).
pub fn requirement_text<O: Display>(r: &Requirement<O>) -> String {
    let mut s = String::new();
    write_requirement(&mut s, r).expect("writing to a String cannot fail");
    s
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('"');
    q
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn sanction_text() {
        let ast: ContractAst = ContractAst::Sanction(Sanction {
            threshold: 3,
            window: 10000,
        });
        assert_eq!(print(&ast), "SANCTION THRESHOLD 3 WINDOW 10000\n");
    }

    #[test]
    fn reprint_is_byte_equal_and_keeps_child_order() {
        let src = "DEGREE \"M\\\"Sc\\\\\" BY home-u REQUIRES ALL(COURSE \"b\", ANY(CREDITS >= 5.0 IN math, COURSE \"a\" FROM abroad-u), ATLEAST 1 OF (COURSE \"z\", COURSE \"y\"))\n";
        let ast = parse(src).unwrap();
        assert_eq!(print(&ast), src);
        assert_eq!(parse(&print(&ast)).unwrap(), ast);
    }

    #[test]
    fn recognition_normalizes_numbers_and_spacing() {
        let ast = parse("RECOGNITION  BETWEEN home-u AND abroad-u\nWHERE SOURCE IN (MOOC,OPEN_BADGE) AND CREDITS>=3 MAP FACTOR 1 TOPIC a->b").unwrap();
        assert_eq!(
            print(&ast),
            "RECOGNITION BETWEEN home-u AND abroad-u WHERE SOURCE IN (MOOC, OPEN_BADGE) AND CREDITS >= 3.0 MAP FACTOR 1.0 TOPIC a -> b\n"
        );
    }
}
