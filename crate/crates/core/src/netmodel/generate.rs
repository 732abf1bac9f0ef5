//! Abstract grid and spider networks.

use std::f64::consts::TAU;

use super::{EdgeSpec, NetError, NetworkBuilder, RoadNetwork};

const SPEED: f64 = 13.89;
const PRIORITY: i32 = 5;

/// Column label in the style A, B, …, Z, AA, AB, …
fn letters(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn two_way(
    b: &mut NetworkBuilder,
    u: &str,
    v: &str,
    name: &str,
) -> Result<(), NetError> {
    for (f, t) in [(u, v), (v, u)] {
        b.add_edge(
            EdgeSpec::new(format!("{f}_{t}"), f, t)
                .name(name)
                .speed(SPEED)
                .priority(PRIORITY),
        )?;
    }
    Ok(())
}

/// Lattice of `rows × cols` nodes `spacing` meters apart with two-way streets
/// between 4-neighbours. Rows are named "1st Street", "2nd Street", …;
/// columns "A Avenue", "B Avenue", …. Interior nodes are signalized.
pub fn generate_grid(rows: usize, cols: usize, spacing: f64) -> Result<RoadNetwork, NetError> {
    if rows < 2 || cols < 2 || !(spacing > 0.0) {
        return Err(NetError::InvalidParameters(format!(
            "grid needs rows, cols >= 2 and spacing > 0 (got {rows}, {cols}, {spacing})"
        )));
    }
    let id = |r: usize, c: usize| format!("{}{r}", letters(c));
    let mut b = NetworkBuilder::new();
    for r in 0..rows {
        for c in 0..cols {
            b.add_node(id(r, c), c as f64 * spacing, r as f64 * spacing);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                two_way(&mut b, &id(r, c), &id(r, c + 1), &format!("{} Street", ordinal(r + 1)))?;
            }
            if r + 1 < rows {
                two_way(&mut b, &id(r, c), &id(r + 1, c), &format!("{} Avenue", letters(c)))?;
            }
            if r > 0 && c > 0 && r + 1 < rows && c + 1 < cols {
                b.signalize(id(r, c));
            }
        }
    }
    b.build()
}

/// Center node plus `circles` concentric rings of `arms` nodes, ring `k` at
/// radius `k · spacing`. Radials are named "Arm A Road", …; rings
/// "Ring 1 Road", …. Every ring node is signalized.
pub fn generate_spider(arms: usize, circles: usize, spacing: f64) -> Result<RoadNetwork, NetError> {
    if arms < 3 || circles < 1 || !(spacing > 0.0) {
        return Err(NetError::InvalidParameters(format!(
            "spider needs arms >= 3, circles >= 1 and spacing > 0 (got {arms}, {circles}, {spacing})"
        )));
    }
    let id = |a: usize, k: usize| format!("{}{k}", letters(a));
    let mut b = NetworkBuilder::new();
    b.add_node("center", 0.0, 0.0);
    for k in 1..=circles {
        for a in 0..arms {
            let angle = TAU * a as f64 / arms as f64;
            let r = k as f64 * spacing;
            b.add_node(id(a, k), r * angle.cos(), r * angle.sin());
            b.signalize(id(a, k));
        }
    }
    for a in 0..arms {
        let name = format!("Arm {} Road", letters(a));
        two_way(&mut b, "center", &id(a, 1), &name)?;
        for k in 1..circles {
            two_way(&mut b, &id(a, k), &id(a, k + 1), &name)?;
        }
    }
    for k in 1..=circles {
        let name = format!("Ring {k} Road");
        for a in 0..arms {
            two_way(&mut b, &id(a, k), &id((a + 1) % arms, k), &name)?;
        }
    }
    b.build()
}
