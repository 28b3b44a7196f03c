use std::path::Path;

use super::CellFlags;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::svg::Svg;

/// Residual magnitude rendered at full colour intensity.
pub const SATURATION: f64 = 10.0;

const CELL: f64 = 16.0;
const YELLOW: (u8, u8, u8) = (255, 255, 0);
const LIGHT_RED: (u8, u8, u8) = (255, 204, 204);
const DARK_RED: (u8, u8, u8) = (139, 0, 0);
const LIGHT_BLUE: (u8, u8, u8) = (204, 204, 255);
const DARK_BLUE: (u8, u8, u8) = (0, 0, 139);

fn lerp(a: (u8, u8, u8), b: (u8, u8, u8), t: f64) -> (u8, u8, u8) {
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Fill colour of one cell: white when missing, yellow within the cutoff,
/// red above (higher than predicted) and blue below, darkening up to
/// `|stdres| = 10`.
pub fn cell_color(stdres: f64, missing: bool, cutoff: f64) -> String {
    let rgb = if missing || stdres.is_nan() {
        (255, 255, 255)
    } else if stdres.abs() <= cutoff {
        YELLOW
    } else {
        let t = if cutoff >= SATURATION {
            1.0
        } else {
            ((stdres.abs() - cutoff) / (SATURATION - cutoff)).clamp(0.0, 1.0)
        };
        if stdres > 0.0 {
            lerp(LIGHT_RED, DARK_RED, t)
        } else {
            lerp(LIGHT_BLUE, DARK_BLUE, t)
        }
    };
    format!("rgb({},{},{})", rgb.0, rgb.1, rgb.2)
}

/// Render the residual grid as an SVG document.
pub fn cellmap_svg(flags: &CellFlags, row_names: &[String], col_names: &[String]) -> Result<String> {
    let (n, d) = flags.shape();
    if row_names.len() != n || col_names.len() != d || flags.stdres.shape() != (n, d) {
        return Err(Error::Dimension(format!(
            "cellmap of {n}x{d} flags with {} row and {} column names",
            row_names.len(),
            col_names.len()
        )));
    }
    let longest = |names: &[String]| names.iter().map(|s| s.chars().count()).max().unwrap_or(0) as f64;
    let left = 10.0 + 7.0 * longest(row_names);
    let top = 10.0 + 6.0 * longest(col_names);
    let width = left + CELL * d as f64 + 10.0;
    let height = top + CELL * n as f64 + 10.0;

    let mut svg = Svg::new(width, height);
    for (j, name) in col_names.iter().enumerate() {
        let x = left + CELL * (j as f64 + 0.5);
        svg.text(x, top - 4.0, 11.0, "start", -90.0, "black", name);
    }
    for (i, name) in row_names.iter().enumerate() {
        let y = top + CELL * (i as f64 + 0.75);
        let color = if flags.row_flags[i] { "red" } else { "black" };
        svg.text(left - 4.0, y, 11.0, "end", 0.0, color, name);
        for j in 0..d {
            let fill = cell_color(flags.stdres[(i, j)], flags.missing[(i, j)], flags.cutoff);
            svg.rect(left + CELL * j as f64, top + CELL * i as f64, CELL, CELL, &fill, "gray");
        }
    }
    Ok(svg.finish())
}

pub fn write_cellmap(flags: &CellFlags, row_names: &[String], col_names: &[String], path: &Path) -> Result<()> {
    write_atomic(path, cellmap_svg(flags, row_names, col_names)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::DEFAULT_CUTOFF;
    use nalgebra::DMatrix;

    fn names(prefix: &str, k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn clean_cells_are_yellow() {
        let f = CellFlags::from_residuals(
            DMatrix::from_element(2, 2, 0.3),
            DMatrix::zeros(2, 2),
            DMatrix::from_element(2, 2, false),
            DEFAULT_CUTOFF,
        );
        let svg = cellmap_svg(&f, &names("r", 2), &names("c", 2)).unwrap();
        assert_eq!(svg.matches("fill=\"rgb(255,255,0)\"").count(), 4);
    }

    #[test]
    fn gradient_endpoints() {
        assert_eq!(cell_color(10.0, false, DEFAULT_CUTOFF), "rgb(139,0,0)");
        assert_eq!(cell_color(25.0, false, DEFAULT_CUTOFF), "rgb(139,0,0)");
        assert_eq!(cell_color(-10.0, false, DEFAULT_CUTOFF), "rgb(0,0,139)");
        assert_eq!(cell_color(DEFAULT_CUTOFF + 1e-9, false, DEFAULT_CUTOFF), "rgb(255,204,204)");
        assert_eq!(cell_color(-DEFAULT_CUTOFF - 1e-9, false, DEFAULT_CUTOFF), "rgb(204,204,255)");
        assert_eq!(cell_color(f64::NAN, true, DEFAULT_CUTOFF), "rgb(255,255,255)");
        assert_eq!(cell_color(2.5, false, DEFAULT_CUTOFF), "rgb(255,255,0)");
    }

    #[test]
    fn dimension_mismatch() {
        let f = CellFlags::from_residuals(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::from_element(2, 2, false),
            DEFAULT_CUTOFF,
        );
        assert!(cellmap_svg(&f, &names("r", 3), &names("c", 2)).is_err());
    }
}
