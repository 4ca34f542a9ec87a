use super::{apply, PerturbationSpec};
use crate::{Error, ImageBuffer, Result};

/// Gap between tiles, in pixels, filled with white.
pub const SHEET_GAP: usize = 4;

/// Placement of one spec on a contact sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetTile {
    pub tag: String,
    pub row: usize,
    pub col: usize,
}

/// Lays out every spec applied to `img` on a grid, `columns` tiles per row in
/// suite order. Each perturbation runs at the input resolution; the result is
/// then scaled to fit a `tile x tile` box.
pub fn contact_sheet(
    img: &ImageBuffer,
    suite: &[PerturbationSpec],
    columns: usize,
    tile: usize,
) -> Result<(ImageBuffer, Vec<SheetTile>)> {
    if suite.is_empty() || columns == 0 || tile == 0 {
        return Err(Error::InvalidParameter(
            "contact sheet needs specs, columns >= 1 and tile >= 1".into(),
        ));
    }
    let scale = tile as f64 / img.height().max(img.width()) as f64;
    let th = ((img.height() as f64 * scale).round() as usize).max(1);
    let tw = ((img.width() as f64 * scale).round() as usize).max(1);
    let rows = suite.len().div_ceil(columns);
    let c = img.channels();
    let height = rows * th + (rows + 1) * SHEET_GAP;
    let width = columns * tw + (columns + 1) * SHEET_GAP;
    let mut pixels = vec![1.0f32; height * width * c];
    let mut tiles = Vec::with_capacity(suite.len());
    for (i, spec) in suite.iter().enumerate() {
        let (row, col) = (i / columns, i % columns);
        let out = apply(spec, img)?.resize_bilinear(th, tw)?;
        let (y0, x0) = (SHEET_GAP + row * (th + SHEET_GAP), SHEET_GAP + col * (tw + SHEET_GAP));
        for y in 0..th {
            let src = &out.pixels()[y * tw * c..(y + 1) * tw * c];
            let start = ((y0 + y) * width + x0) * c;
            pixels[start..start + tw * c].copy_from_slice(src);
        }
        tiles.push(SheetTile {
            tag: spec.tag(),
            row,
            col,
        });
    }
    Ok((ImageBuffer::new(c, height, width, pixels)?, tiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::default_suite;

    #[test]
    fn default_suite_fills_six_by_five() {
        let img = ImageBuffer::filled(1, 10, 20, 0.5).unwrap();
        let (sheet, tiles) = contact_sheet(&img, &default_suite(), 6, 16).unwrap();
        assert_eq!(tiles.len(), 30);
        assert_eq!(tiles.last().unwrap().row, 4);
        assert_eq!(sheet.width(), 6 * 16 + 7 * SHEET_GAP);
        assert_eq!(sheet.height(), 5 * 8 + 6 * SHEET_GAP);
    }
}
