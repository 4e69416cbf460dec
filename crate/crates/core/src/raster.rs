//! Drawing primitives and the 3×5 bitmap font used by synthetic puzzles.

use image::{Rgb, RgbImage};

pub const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
/// Text is the only pure-black content in a synthetic image.
pub const INK: Rgb<u8> = Rgb([0, 0, 0]);
/// Lines and rulers.
pub const LINE: Rgb<u8> = Rgb([90, 90, 90]);

/// The fixed shape palette. Color options are always listed in this order.
pub const PALETTE: [(&str, Rgb<u8>); 5] = [
    ("red", Rgb([220, 40, 40])),
    ("green", Rgb([40, 170, 60])),
    ("blue", Rgb([40, 80, 220])),
    ("yellow", Rgb([230, 200, 30])),
    ("purple", Rgb([150, 60, 190])),
];

pub fn palette_name(color: Rgb<u8>) -> Option<&'static str> {
    PALETTE.iter().find(|(_, c)| *c == color).map(|(n, _)| *n)
}

pub fn blank(size: u32) -> RgbImage {
    RgbImage::from_pixel(size, size, BACKGROUND)
}

pub fn fill_rect(img: &mut RgbImage, top: i64, left: i64, height: i64, width: i64, color: Rgb<u8>) {
    for r in top.max(0)..(top + height).min(img.height() as i64) {
        for c in left.max(0)..(left + width).min(img.width() as i64) {
            img.put_pixel(c as u32, r as u32, color);
        }
    }
}

/// Filled disk of the given radius centred on pixel `(row, col)`.
pub fn fill_disk(img: &mut RgbImage, row: i64, col: i64, radius: i64, color: Rgb<u8>) {
    for r in (row - radius)..=(row + radius) {
        for c in (col - radius)..=(col + radius) {
            let (dr, dc) = (r - row, c - col);
            if dr * dr + dc * dc <= radius * radius + radius / 2
                && r >= 0
                && c >= 0
                && (r as u32) < img.height()
                && (c as u32) < img.width()
            {
                img.put_pixel(c as u32, r as u32, color);
            }
        }
    }
}

/// Glyph bitmaps, rows top to bottom. Every glyph touches its leftmost
/// column so a reader can find glyph starts from the first inked column.
fn glyph_rows(ch: char) -> Option<[&'static str; 5]> {
    Some(match ch {
        '0' => ["###", "#.#", "#.#", "#.#", "###"],
        '1' => [".#.", "##.", ".#.", ".#.", "###"],
        '2' => ["###", "..#", "###", "#..", "###"],
        '3' => ["###", "..#", "###", "..#", "###"],
        '4' => ["#.#", "#.#", "###", "..#", "..#"],
        '5' => ["###", "#..", "###", "..#", "###"],
        '6' => ["###", "#..", "###", "#.#", "###"],
        '7' => ["###", "..#", ".#.", ".#.", ".#."],
        '8' => ["###", "#.#", "###", "#.#", "###"],
        '9' => ["###", "#.#", "###", "..#", "###"],
        '+' => ["...", ".#.", "###", ".#.", "..."],
        '-' => ["...", "...", "###", "...", "..."],
        '=' => ["...", "###", "...", "###", "..."],
        '?' => ["##.", "..#", ".#.", "...", ".#."],
        'x' => ["...", "#.#", ".#.", "#.#", "..."],
        _ => return None,
    })
}

pub const GLYPH_CHARS: &str = "0123456789+-=?x";
pub const GLYPH_W: u32 = 3;
pub const GLYPH_H: u32 = 5;
/// Horizontal advance per glyph, in font pixels.
pub const GLYPH_ADVANCE: u32 = 4;

pub fn text_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        (n * GLYPH_ADVANCE - 1) * scale
    }
}

/// Draws `text` with its top-left corner at `(top, left)`. Characters outside
/// the font are skipped (but still advance).
pub fn draw_text(img: &mut RgbImage, text: &str, top: u32, left: u32, scale: u32) {
    for (i, ch) in text.chars().enumerate() {
        let Some(rows) = glyph_rows(ch) else { continue };
        let x0 = left + i as u32 * GLYPH_ADVANCE * scale;
        for (r, row) in rows.iter().enumerate() {
            for (c, px) in row.bytes().enumerate() {
                if px == b'#' {
                    fill_rect(
                        img,
                        (top + r as u32 * scale) as i64,
                        (x0 + c as u32 * scale) as i64,
                        scale as i64,
                        scale as i64,
                        INK,
                    );
                }
            }
        }
    }
}

/// Reads back text drawn with [`draw_text`]. Separate lines (bands of inked
/// rows split by blank rows) are read top to bottom and concatenated.
pub fn read_text(img: &RgbImage) -> Option<String> {
    let inked_row = |r: u32| (0..img.width()).any(|c| *img.get_pixel(c, r) == INK);
    let mut out = String::new();
    let mut r = 0;
    let mut found = false;
    while r < img.height() {
        if !inked_row(r) {
            r += 1;
            continue;
        }
        let top = r;
        while r < img.height() && inked_row(r) {
            r += 1;
        }
        let band = read_line(img, top, r)?;
        out.push_str(&band.0);
        r = r.max(top + band.1);
        found = true;
    }
    found.then_some(out)
}

/// Reads one line whose glyph tops sit on row `top` (lines always contain a
/// glyph inked on its first row); `band_end` is the end of the contiguous run
/// of inked rows. Returns the text and the line height in pixels.
fn read_line(img: &RgbImage, top: u32, band_end: u32) -> Option<(String, u32)> {
    let inked = |r: u32, c: u32| *img.get_pixel(c, r) == INK;
    let left = (0..img.width()).find(|&c| (top..band_end).any(|r| inked(r, c)))?;
    let max_scale = (img.height() - top) / GLYPH_H;
    for scale in (1..=max_scale.max(1)).rev() {
        if let Some(text) = decode_at(img, top, left, scale) {
            return Some((text, GLYPH_H * scale));
        }
    }
    None
}

fn decode_at(img: &RgbImage, top: u32, left: u32, scale: u32) -> Option<String> {
    let inked = |r: u32, c: u32| r < img.height() && c < img.width() && *img.get_pixel(c, r) == INK;
    if top + GLYPH_H * scale > img.height() {
        return None;
    }
    let mut out = String::new();
    let mut x0 = left;
    loop {
        if x0 + GLYPH_W * scale > img.width() {
            break;
        }
        let cell: Vec<String> = (0..GLYPH_H)
            .map(|r| {
                (0..GLYPH_W)
                    .map(|c| if inked(top + r * scale, x0 + c * scale) { '#' } else { '.' })
                    .collect()
            })
            .collect();
        if cell.iter().all(|row| !row.contains('#')) {
            break;
        }
        // Every pixel of a scaled font pixel must agree.
        for r in 0..GLYPH_H * scale {
            for c in 0..GLYPH_W * scale {
                let expect = cell[(r / scale) as usize].as_bytes()[(c / scale) as usize] == b'#';
                if inked(top + r, x0 + c) != expect {
                    return None;
                }
            }
        }
        let ch = GLYPH_CHARS
            .chars()
            .find(|&ch| glyph_rows(ch).is_some_and(|g| g.iter().zip(&cell).all(|(a, b)| *a == b)))?;
        out.push(ch);
        x0 += GLYPH_ADVANCE * scale;
    }
    (!out.is_empty()).then_some(out)
}
