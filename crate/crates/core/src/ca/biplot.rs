use std::path::Path;

use super::CASolution;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::svg::{escape, num, Svg};

const SIZE: f64 = 520.0;
const MARGIN: f64 = 70.0;

/// Canvas positions of the row points and column arrow tips.
#[derive(Debug, Clone, PartialEq)]
pub struct BiplotPoints {
    pub origin: (f64, f64),
    pub rows: Vec<(f64, f64)>,
    pub cols: Vec<(f64, f64)>,
}

/// Map the first two principal coordinates to canvas positions, with one
/// common scale for rows and columns and the origin at the centre.
pub fn biplot_points(sol: &CASolution) -> Result<BiplotPoints> {
    if sol.k < 2 {
        return Err(Error::InvalidInput(format!("biplot needs k >= 2, got {}", sol.k)));
    }
    let extent = sol
        .row_pc
        .columns(0, 2)
        .iter()
        .chain(sol.col_pc.columns(0, 2).iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if extent > 1e-12 { (SIZE / 2.0 - MARGIN) / extent } else { 0.0 };
    let c = SIZE / 2.0;
    let map = |x: f64, y: f64| (c + scale * x, c - scale * y);
    Ok(BiplotPoints {
        origin: (c, c),
        rows: (0..sol.row_pc.nrows()).map(|i| map(sol.row_pc[(i, 0)], sol.row_pc[(i, 1)])).collect(),
        cols: (0..sol.col_pc.nrows()).map(|i| map(sol.col_pc[(i, 0)], sol.col_pc[(i, 1)])).collect(),
    })
}

/// Rows as labelled points, columns as labelled arrows from the origin.
pub fn biplot_svg(sol: &CASolution) -> Result<String> {
    let pts = biplot_points(sol)?;
    let (ox, oy) = pts.origin;
    let mut svg = Svg::new(SIZE, SIZE);
    svg.raw(
        r#"<defs><marker id="arrow" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="steelblue"/></marker></defs>"#,
    );
    svg.line(MARGIN / 2.0, oy, SIZE - MARGIN / 2.0, oy, "lightgray", 1.0);
    svg.line(ox, MARGIN / 2.0, ox, SIZE - MARGIN / 2.0, "lightgray", 1.0);
    let share = |j: usize| {
        let total: f64 = sol.gamma.iter().map(|g| g * g).sum();
        if total > 0.0 {
            100.0 * sol.gamma[j].powi(2) / total
        } else {
            0.0
        }
    };
    svg.text(SIZE - 10.0, oy - 6.0, 11.0, "end", 0.0, "gray", &format!("Dim 1 ({}%)", num(share(0))));
    svg.text(ox + 6.0, 20.0, 11.0, "start", 0.0, "gray", &format!("Dim 2 ({}%)", num(share(1))));

    for (name, &(x, y)) in sol.col_names.iter().zip(&pts.cols) {
        svg.raw(&format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="steelblue" stroke-width="1.500" marker-end="url(#arrow)"/>"#,
            num(ox),
            num(oy),
            num(x),
            num(y)
        ));
        svg.raw(&format!(
            r#"<text x="{}" y="{}" font-size="12.000" text-anchor="middle" fill="steelblue">{}</text>"#,
            num(x),
            num(y - 8.0),
            escape(name)
        ));
    }
    for (name, &(x, y)) in sol.row_names.iter().zip(&pts.rows) {
        svg.circle(x, y, 3.0, "firebrick");
        svg.text(x + 5.0, y - 5.0, 10.0, "start", 0.0, "firebrick", name);
    }
    Ok(svg.finish())
}

pub fn write_biplot(sol: &CASolution, path: &Path) -> Result<()> {
    write_atomic(path, biplot_svg(sol)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ca::{classical_ca, ContingencyTable, KChoice};
    use nalgebra::DMatrix;

    fn table() -> ContingencyTable {
        ContingencyTable::new(DMatrix::from_row_slice(
            4,
            3,
            &[20.0, 5.0, 3.0, 4.0, 18.0, 6.0, 2.0, 7.0, 25.0, 10.0, 10.0, 10.0],
        ))
        .unwrap()
    }

    #[test]
    fn flipping_component_two_mirrors_vertically() {
        let sol = classical_ca(&table(), KChoice::Fixed(2)).unwrap();
        let mut flipped = sol.clone();
        flipped.flip(1);
        let a = biplot_points(&sol).unwrap();
        let b = biplot_points(&flipped).unwrap();
        let (_, oy) = a.origin;
        for (p, q) in a.rows.iter().chain(&a.cols).zip(b.rows.iter().chain(&b.cols)) {
            assert!((p.0 - q.0).abs() < 1e-12);
            assert!((p.1 - oy + (q.1 - oy)).abs() < 1e-9);
        }
    }

    #[test]
    fn independence_puts_everything_at_origin() {
        let t = ContingencyTable::new(DMatrix::from_fn(4, 3, |i, j| ((i + 1) * (j + 1)) as f64)).unwrap();
        let sol = classical_ca(&t, KChoice::Fixed(2)).unwrap();
        let p = biplot_points(&sol).unwrap();
        assert!(p.rows.iter().chain(&p.cols).all(|&q| q == p.origin));
    }

    #[test]
    fn needs_two_components() {
        let sol = classical_ca(&table(), KChoice::Fixed(1)).unwrap();
        assert!(biplot_svg(&sol).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let sol = classical_ca(&table(), KChoice::Fixed(2)).unwrap();
        let a = biplot_svg(&sol).unwrap();
        assert_eq!(a, biplot_svg(&sol).unwrap());
        assert_eq!(a.matches("<circle").count(), 4);
        assert_eq!(a.matches("marker-end").count(), 3);
    }
}
