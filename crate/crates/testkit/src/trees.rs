//! Exhaustive enumeration of small requirement trees.

use studchain_core::contract::{parse, ContractAst, Requirement};
use studchain_core::{AchievementRecord, OrgId};

use crate::world::{achievement, org_key, student};

#[derive(Clone)]
enum Shape {
    Leaf,
    All(Vec<Shape>),
    Any(Vec<Shape>),
    AtLeast(u32, Vec<Shape>),
}

/// Ordered ways to split `k` into `parts` positive sizes.
fn compositions(k: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![k]];
    }
    let mut out = Vec::new();
    for first in 1..=k - (parts - 1) {
        for mut rest in compositions(k - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn product(lists: &[Vec<Shape>]) -> Vec<Vec<Shape>> {
    let mut out = vec![vec![]];
    for list in lists {
        let mut next = Vec::new();
        for prefix in &out {
            for s in list {
                let mut v = prefix.clone();
                v.push(s.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Every tree shape with exactly `k` leaves whose inner nodes have at least
/// two children.
fn shapes(k: usize) -> Vec<Shape> {
    if k == 1 {
        return vec![Shape::Leaf];
    }
    let mut out = Vec::new();
    for parts in 2..=k {
        for comp in compositions(k, parts) {
            let lists: Vec<Vec<Shape>> = comp.iter().map(|&n| shapes(n)).collect();
            for children in product(&lists) {
                out.push(Shape::All(children.clone()));
                out.push(Shape::Any(children.clone()));
                for n in 1..=children.len() as u32 {
                    out.push(Shape::AtLeast(n, children.clone()));
                }
            }
        }
    }
    out
}

fn fill(shape: &Shape, leaves: &mut impl Iterator<Item = Requirement<OrgId>>) -> Requirement<OrgId> {
    let all = |c: &[Shape], leaves: &mut dyn Iterator<Item = Requirement<OrgId>>| {
        let mut it = leaves;
        c.iter().map(|s| fill(s, &mut it)).collect::<Vec<_>>()
    };
    match shape {
        Shape::Leaf => leaves.next().expect("enough leaves"),
        Shape::All(c) => Requirement::AllOf(all(c, leaves)),
        Shape::Any(c) => Requirement::AnyOf(all(c, leaves)),
        Shape::AtLeast(n, c) => Requirement::AtLeastNOf {
            n: *n,
            children: all(c, leaves),
        },
    }
}

fn arrangements(pool: &[Requirement<OrgId>], k: usize) -> Vec<Vec<Requirement<OrgId>>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, leaf) in pool.iter().enumerate() {
        let rest: Vec<_> = pool.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, l)| l.clone()).collect();
        for mut tail in arrangements(&rest, k - 1) {
            tail.insert(0, leaf.clone());
            out.push(tail);
        }
    }
    out
}

/// All trees with 1..=`max_leaves` leaves drawn without repetition from
/// `pool`, in every order and every composite shape (ALL, ANY, ATLEAST n).
pub fn all_trees(pool: &[Requirement<OrgId>], max_leaves: usize) -> Vec<Requirement<OrgId>> {
    let mut out = Vec::new();
    for k in 1..=max_leaves.min(pool.len()) {
        let shapes = shapes(k);
        for leaves in arrangements(pool, k) {
            for shape in &shapes {
                out.push(fill(shape, &mut leaves.clone().into_iter()));
            }
        }
    }
    out
}

/// Parses a requirement expression; org names resolve through `org_key`.
pub fn requirement(src: &str) -> Requirement<OrgId> {
    let full = format!("DEGREE \"d\" BY home-u REQUIRES {src}");
    let ast = parse(&full).expect("requirement source");
    match ast.try_map_orgs(&mut |r| Ok::<_, ()>(org_key(&r.to_string()).org_id())).unwrap() {
        ContractAst::Degree(d) => d.requirement,
        _ => unreachable!(),
    }
}

/// Six passed and failed records over two topics, two courses and two
/// issuers; four leaves that combine them in different ways.
pub fn truth_table_universe() -> (Vec<AchievementRecord>, Vec<Requirement<OrgId>>) {
    let a = org_key("home-u").org_id();
    let b = org_key("abroad-u").org_id();
    let s = student(1);
    let universe = vec![
        achievement(s, a, "C1", "3.0", &["math"], true),
        achievement(s, a, "C2", "4.0", &["math", "cs"], true),
        achievement(s, b, "C2", "5.0", &["cs"], true),
        achievement(s, b, "C3", "6.0", &["math"], false),
        achievement(s, a, "C3", "2.5", &["cs"], true),
        achievement(s, b, "C1", "1.0", &["math"], true),
    ];
    let leaves = vec![
        requirement("CREDITS >= 7 IN math"),
        requirement("COURSE \"C2\" FROM abroad-u"),
        requirement("COURSE \"C3\""),
        requirement("CREDITS >= 6.5 IN cs"),
    ];
    (universe, leaves)
}
