//! Contract syntax tree.
//!
//! The tree is generic over how organizations are referenced: the parser
//! produces [`OrgRef`]s (a registered name or a hex org id) and
//! [`static_check`](super::static_check) resolves them to [`OrgId`]s against
//! the chain.

use std::fmt;

use serde::Serialize;

use crate::crypto::OrgId;
use crate::ids::Decimal;
use crate::records::SourceKind;

/// Organization reference as written in contract source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrgRef {
    Id(OrgId),
    Name(String),
}

impl fmt::Display for OrgRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrgRef::Id(id) => write!(f, "{id}"),
            OrgRef::Name(name) => f.write_str(name),
        }
    }
}

impl Serialize for OrgRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractAst<O = OrgRef> {
    Recognition(Recognition<O>),
    Degree(Degree<O>),
    Sanction(Sanction),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recognition<O = OrgRef> {
    pub home: O,
    pub foreign: O,
    pub predicate: Predicate<O>,
    /// Credit multiplier in (0, 2].
    pub factor: Decimal,
    pub topic_map: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Degree<O = OrgRef> {
    pub issuer: O,
    pub degree_name: String,
    pub requirement: Requirement<O>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sanction {
    pub threshold: u64,
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Requirement<O = OrgRef> {
    CreditsAtLeast { amount: Decimal, topic: String },
    Course { course_id: String, issuer: Option<O> },
    AllOf(Vec<Requirement<O>>),
    AnyOf(Vec<Requirement<O>>),
    AtLeastNOf { n: u32, children: Vec<Requirement<O>> },
}

/// Conjunction of atoms, at most one per kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate<O = OrgRef> {
    pub atoms: Vec<Atom<O>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom<O = OrgRef> {
    IssuerEquals(O),
    TopicContains(String),
    CreditsAtLeast(Decimal),
    Passed,
    SourceIn(Vec<SourceKind>),
}

impl<O> Atom<O> {
    /// Discriminant used to enforce one atom per kind.
    pub fn kind(&self) -> u8 {
        match self {
            Atom::IssuerEquals(_) => 0,
            Atom::TopicContains(_) => 1,
            Atom::CreditsAtLeast(_) => 2,
            Atom::Passed => 3,
            Atom::SourceIn(_) => 4,
        }
    }
}

impl<O> Requirement<O> {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Requirement::CreditsAtLeast { .. } | Requirement::Course { .. })
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Requirement<O>> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Requirement<O>>) {
        match self {
            Requirement::AllOf(c) | Requirement::AnyOf(c) | Requirement::AtLeastNOf { children: c, .. } => {
                c.iter().for_each(|r| r.collect_leaves(out))
            }
            leaf => out.push(leaf),
        }
    }
}

impl SourceKind {
    pub fn keyword(self) -> &'static str {
        match self {
            SourceKind::UniversityExam => "UNIVERSITY_EXAM",
            SourceKind::Mooc => "MOOC",
            SourceKind::OpenBadge => "OPEN_BADGE",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "UNIVERSITY_EXAM" => Some(SourceKind::UniversityExam),
            "MOOC" => Some(SourceKind::Mooc),
            "OPEN_BADGE" => Some(SourceKind::OpenBadge),
            _ => None,
        }
    }
}

// Conversions between reference styles.

impl<O> ContractAst<O> {
    pub fn try_map_orgs<P, E>(&self, f: &mut impl FnMut(&O) -> Result<P, E>) -> Result<ContractAst<P>, E> {
        Ok(match self {
            ContractAst::Recognition(r) => ContractAst::Recognition(Recognition {
                home: f(&r.home)?,
                foreign: f(&r.foreign)?,
                predicate: r.predicate.try_map_orgs(f)?,
                factor: r.factor,
                topic_map: r.topic_map.clone(),
            }),
            ContractAst::Degree(d) => ContractAst::Degree(Degree {
                issuer: f(&d.issuer)?,
                degree_name: d.degree_name.clone(),
                requirement: d.requirement.try_map_orgs(f)?,
            }),
            ContractAst::Sanction(s) => ContractAst::Sanction(*s),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ContractAst::Recognition(_) => "recognition",
            ContractAst::Degree(_) => "degree",
            ContractAst::Sanction(_) => "sanction",
        }
    }
}

impl<O> Predicate<O> {
    pub fn try_map_orgs<P, E>(&self, f: &mut impl FnMut(&O) -> Result<P, E>) -> Result<Predicate<P>, E> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                Ok(match a {
                    Atom::IssuerEquals(o) => Atom::IssuerEquals(f(o)?),
                    Atom::TopicContains(t) => Atom::TopicContains(t.clone()),
                    Atom::CreditsAtLeast(c) => Atom::CreditsAtLeast(*c),
                    Atom::Passed => Atom::Passed,
                    Atom::SourceIn(k) => Atom::SourceIn(k.clone()),
                })
            })
            .collect::<Result<_, E>>()?;
        Ok(Predicate { atoms })
    }
}

impl<O> Requirement<O> {
    pub fn try_map_orgs<P, E>(&self, f: &mut impl FnMut(&O) -> Result<P, E>) -> Result<Requirement<P>, E> {
        fn all<O, P, E>(
            c: &[Requirement<O>],
            f: &mut impl FnMut(&O) -> Result<P, E>,
        ) -> Result<Vec<Requirement<P>>, E> {
            c.iter().map(|r| r.try_map_orgs(f)).collect()
        }
        Ok(match self {
            Requirement::CreditsAtLeast { amount, topic } => Requirement::CreditsAtLeast {
                amount: *amount,
                topic: topic.clone(),
            },
            Requirement::Course { course_id, issuer } => Requirement::Course {
                course_id: course_id.clone(),
                issuer: match issuer {
                    Some(o) => Some(f(o)?),
                    None => None,
                },
            },
            Requirement::AllOf(c) => Requirement::AllOf(all(c, f)?),
            Requirement::AnyOf(c) => Requirement::AnyOf(all(c, f)?),
            Requirement::AtLeastNOf { n, children } => Requirement::AtLeastNOf {
                n: *n,
                children: all(children, f)?,
            },
        })
    }
}

impl From<OrgId> for OrgRef {
    fn from(id: OrgId) -> Self {
        OrgRef::Id(id)
    }
}

impl ContractAst<OrgId> {
    /// Back to source-level references (hex ids).
    pub fn to_refs(&self) -> ContractAst<OrgRef> {
        self.try_map_orgs::<_, std::convert::Infallible>(&mut |id| Ok(OrgRef::Id(*id)))
            .unwrap_or_else(|e| match e {})
    }
}
