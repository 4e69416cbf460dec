//! Desk-scale synthetic puzzles with programmatically known answers.
//!
//! Each category has [`ROOTS_PER_CATEGORY`] root designs (rendering
//! variants); instances cycle through them so a Puzzle Split can hold out
//! whole designs. Shapes sit in a 3×3 grid of cells with at least a two-pixel
//! gap between cells, so distinct shapes never touch.

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::puzzle::{PuzzleInstance, SkillCategory};
use crate::raster::{self, blank, draw_text, fill_disk, fill_rect, text_width, LINE, PALETTE};

pub const ROOTS_PER_CATEGORY: u32 = 4;

const GRID: u32 = 3;

#[derive(Clone, Copy, PartialEq, Eq)]
enum ShapeKind {
    Disk,
    Square,
}

struct Canvas {
    img: RgbImage,
    size: u32,
    cell: u32,
    margin: u32,
}

impl Canvas {
    fn new(size: u32) -> Self {
        let cell = size / GRID;
        Canvas {
            img: blank(size),
            size,
            cell,
            margin: (size - cell * GRID) / 2,
        }
    }

    fn cell_origin(&self, k: u32) -> (i64, i64) {
        let (r, c) = (k / GRID, k % GRID);
        (
            (self.margin + r * self.cell) as i64,
            (self.margin + c * self.cell) as i64,
        )
    }

    /// Shape filling cell `k` with a one-pixel margin.
    fn shape(&mut self, k: u32, kind: ShapeKind, color: Rgb<u8>) {
        let (top, left) = self.cell_origin(k);
        let inner = self.cell as i64 - 2;
        match kind {
            ShapeKind::Disk => {
                let radius = ((inner - 1) / 2).max(1);
                let centre = self.cell as i64 / 2;
                fill_disk(&mut self.img, top + centre, left + centre, radius, color);
            }
            ShapeKind::Square => fill_rect(&mut self.img, top + 1, left + 1, inner, inner, color),
        }
    }

    fn rect_in_cell(&mut self, k: u32, height: i64, width: i64, color: Rgb<u8>) {
        let (top, left) = self.cell_origin(k);
        fill_rect(&mut self.img, top + 1, left + 1, height, width, color);
    }

    fn text_scale(&self) -> u32 {
        (self.size / 32).max(1)
    }

    /// Centred text; wraps before '=' when one line does not fit.
    fn text(&mut self, text: &str) {
        let scale = self.text_scale();
        let lines: Vec<&str> = if text_width(text, scale) + 2 <= self.size {
            vec![text]
        } else {
            match text.find('=') {
                Some(i) => vec![&text[..i], &text[i..]],
                None => vec![text],
            }
        };
        let line_h = (raster::GLYPH_H + 2) * scale;
        let block_h = line_h * lines.len() as u32;
        let mut top = self.size.saturating_sub(block_h) / 2;
        for line in lines {
            let left = self.size.saturating_sub(text_width(line, scale)) / 2;
            draw_text(&mut self.img, line, top, left, scale);
            top += line_h;
        }
    }
}

fn colors() -> Vec<String> {
    PALETTE.iter().map(|(n, _)| n.to_string()).collect()
}

fn one_to_five() -> Vec<String> {
    (1..=5).map(|v| v.to_string()).collect()
}

/// Five consecutive non-negative integers containing `gold`, ascending.
fn numeric_window(gold: i64, rng: &mut ChaCha8Rng) -> (Vec<String>, usize) {
    let start = (gold - rng.random_range(0..=4)).max(0);
    let options = (start..start + 5).map(|v| v.to_string()).collect();
    (options, (gold - start) as usize)
}

fn pick_cells(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    let mut cells: Vec<u32> = (0..GRID * GRID).collect();
    cells.shuffle(rng);
    cells.truncate(n);
    cells
}

fn kind_for(variant: u32) -> ShapeKind {
    if variant % 2 == 0 {
        ShapeKind::Disk
    } else {
        ShapeKind::Square
    }
}

struct Generated {
    image: RgbImage,
    question: &'static str,
    options: Vec<String>,
    gold: usize,
}

fn counting(size: u32, variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut cv = Canvas::new(size);
    let k = rng.random_range(1..=5usize);
    let mono = variant / 2 == 0;
    let base = rng.random_range(0..PALETTE.len());
    for cell in pick_cells(rng, k) {
        let color = if mono { base } else { rng.random_range(0..PALETTE.len()) };
        cv.shape(cell, kind_for(variant), PALETTE[color].1);
    }
    Generated {
        image: cv.img,
        question: "How many shapes are there?",
        options: one_to_five(),
        gold: k - 1,
    }
}

fn logic(size: u32, variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut cv = Canvas::new(size);
    let m = rng.random_range(3..=5usize);
    let mut pair: Vec<usize> = (0..PALETTE.len()).collect();
    pair.shuffle(rng);
    let (common, odd) = (pair[0], pair[1]);
    let cells = pick_cells(rng, m);
    let odd_slot = rng.random_range(0..m);
    for (i, cell) in cells.into_iter().enumerate() {
        let color = if i == odd_slot { odd } else { common };
        cv.shape(cell, kind_for(variant), PALETTE[color].1);
    }
    Generated {
        image: cv.img,
        question: "Which color appears only once?",
        options: colors(),
        gold: odd,
    }
}

fn spatial(size: u32, variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut cv = Canvas::new(size);
    let inner = cv.cell as i64 - 2;
    let mut palette: Vec<usize> = (0..PALETTE.len()).collect();
    palette.shuffle(rng);
    let cells = pick_cells(rng, 3);
    // Shape j has extent ceil(inner·(3−j)/3) along one axis: strictly
    // decreasing areas, shape 0 largest.
    for (j, &cell) in cells.iter().enumerate() {
        let extent = ((inner * (3 - j as i64)) + 2) / 3;
        let (h, w) = if variant % 2 == 0 { (extent, inner) } else { (inner, extent) };
        cv.rect_in_cell(cell, h, w, PALETTE[palette[j]].1);
    }
    Generated {
        image: cv.img,
        question: "What color is the largest shape?",
        options: colors(),
        gold: palette[0],
    }
}

fn pattern(size: u32, variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut cv = Canvas::new(size);
    let period = if variant / 2 == 0 { 2 } else { 3 };
    let mut palette: Vec<usize> = (0..PALETTE.len()).collect();
    palette.shuffle(rng);
    let seq = &palette[..period];
    for i in 0..5u32 {
        cv.shape(i, kind_for(variant), PALETTE[seq[i as usize % period]].1);
    }
    Generated {
        image: cv.img,
        question: "Which color comes next in the sequence?",
        options: colors(),
        gold: seq[5 % period],
    }
}

fn path(size: u32, variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut img = blank(size);
    let t = (size / 32).max(1) as i64;
    let s = size as i64;
    let lane_y = |j: i64| 2 + j * (s - 4 - t) / 4;
    let exit = rng.random_range(0..5i64);
    let start = if variant % 2 == 0 { 0 } else { 4 };
    let bend = rng.random_range(s / 4..=3 * s / 4);
    let (y0, y1) = (lane_y(start), lane_y(exit));
    fill_rect(&mut img, y0, 0, t, bend + t, LINE);
    fill_rect(&mut img, y0.min(y1), bend, (y0 - y1).abs() + t, t, LINE);
    fill_rect(&mut img, y1, bend, t, s - bend, LINE);
    if variant / 2 == 1 {
        // Start marker.
        fill_rect(&mut img, y0 - t.min(y0), 0, 3 * t, 2 * t, PALETTE[2].1);
    }
    Generated {
        image: img,
        question: "At which exit, numbered 1 to 5 from the top, does the line end?",
        options: one_to_five(),
        gold: exit as usize,
    }
}

fn arithmetic(size: u32, _variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut cv = Canvas::new(size);
    let a = rng.random_range(1..=5i64);
    let b = rng.random_range(1..=5i64);
    cv.text(&format!("{a}+{b}=?"));
    let (options, gold) = numeric_window(a + b, rng);
    Generated {
        image: cv.img,
        question: "What is the result of the calculation in the image?",
        options,
        gold,
    }
}

fn measurement(size: u32, variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut img = blank(size);
    let len = rng.random_range(2..=7i64);
    let slot = (size / 8) as i64;
    let width = (slot - 1).max(1);
    let height = (slot - 1).max(3);
    let top = rng.random_range(0..=(size as i64 - height));
    let color = PALETTE[variant as usize % PALETTE.len()].1;
    for i in 0..len {
        fill_rect(&mut img, top, i * slot, height, width, color);
    }
    let (options, gold) = numeric_window(len, rng);
    Generated {
        image: img,
        question: "How many unit blocks long is the bar?",
        options,
        gold,
    }
}

fn algebra(size: u32, variant: u32, rng: &mut ChaCha8Rng) -> Generated {
    let mut cv = Canvas::new(size);
    let x = rng.random_range(1..=4i64);
    let a = rng.random_range(1..=5i64);
    let text = if variant % 2 == 0 {
        format!("x+{a}={}", x + a)
    } else {
        format!("{a}+x={}", x + a)
    };
    cv.text(&text);
    let (options, gold) = numeric_window(x, rng);
    Generated {
        image: cv.img,
        question: "What value of x makes the equation true?",
        options,
        gold,
    }
}

/// `n_per_category` puzzles for each of the eight categories, in category
/// order. Each category draws from its own seeded stream.
pub fn generate_synthetic_puzzles(n_per_category: usize, image_size: u32, seed: u64) -> Result<Vec<PuzzleInstance>> {
    if n_per_category < 1 {
        return Err(Error::invalid("n_per_category must be at least 1"));
    }
    if image_size < 16 {
        return Err(Error::invalid(format!("image size must be at least 16, got {image_size}")));
    }
    let mut out = Vec::with_capacity(n_per_category * SkillCategory::ALL.len());
    for category in SkillCategory::ALL {
        let stream = (category.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream);
        for i in 0..n_per_category {
            let variant = i as u32 % ROOTS_PER_CATEGORY;
            let g = match category {
                SkillCategory::Logic => logic(image_size, variant, &mut rng),
                SkillCategory::Counting => counting(image_size, variant, &mut rng),
                SkillCategory::SpatialReasoning => spatial(image_size, variant, &mut rng),
                SkillCategory::PathTracing => path(image_size, variant, &mut rng),
                SkillCategory::PatternFinding => pattern(image_size, variant, &mut rng),
                SkillCategory::Arithmetic => arithmetic(image_size, variant, &mut rng),
                SkillCategory::Measurement => measurement(image_size, variant, &mut rng),
                SkillCategory::Algebra => algebra(image_size, variant, &mut rng),
            };
            let puzzle = PuzzleInstance {
                id: format!("{}-{i:04}", category.name()),
                root_id: category.index() as u32 * ROOTS_PER_CATEGORY + variant,
                image: g.image,
                question: g.question.to_string(),
                options: g.options,
                gold_option_index: g.gold,
                category,
                weight: 1.0,
            };
            puzzle.validate()?;
            out.push(puzzle);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::normalize_answer;
    use crate::raster::read_text;

    /// Independent 4-connected component count over non-white pixels,
    /// union-find based.
    fn oracle_components(img: &RgbImage) -> usize {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut parent: Vec<usize> = (0..w * h).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let fg = |i: usize| img.get_pixel((i % w) as u32, (i / w) as u32).0 != [255, 255, 255];
        for i in 0..w * h {
            if !fg(i) {
                continue;
            }
            for j in [i + 1, i + w] {
                let neighbour = (j == i + 1 && (i % w) + 1 < w) || (j == i + w && j < w * h);
                if neighbour && fg(j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        (0..w * h).filter(|&i| fg(i) && find(&mut parent, i) == i).count()
    }

    #[test]
    fn counting_gold_matches_flood_fill() {
        for size in [16, 32, 64] {
            let ps = generate_synthetic_puzzles(12, size, 3).unwrap();
            for p in ps.iter().filter(|p| p.category == SkillCategory::Counting) {
                let k: usize = p.gold_answer().parse().unwrap();
                assert_eq!(oracle_components(&p.image), k, "{} at size {size}", p.id);
            }
        }
    }

    #[test]
    fn arithmetic_and_algebra_are_consistent_with_rendered_text() {
        for size in [16, 32] {
            for p in generate_synthetic_puzzles(10, size, 9).unwrap() {
                let text = read_text(&p.image);
                match p.category {
                    SkillCategory::Arithmetic => {
                        let t = text.unwrap();
                        let (a, rest) = t.split_once('+').unwrap();
                        let b = rest.trim_end_matches("=?");
                        let sum: i64 = a.parse::<i64>().unwrap() + b.parse::<i64>().unwrap();
                        assert_eq!(p.gold_answer(), sum.to_string());
                    }
                    SkillCategory::Algebra => {
                        let t = text.unwrap();
                        let (lhs, rhs) = t.split_once('=').unwrap();
                        let a: i64 = lhs.replace("x", "").replace('+', "").parse().unwrap();
                        let x = rhs.parse::<i64>().unwrap() - a;
                        assert_eq!(p.gold_answer(), x.to_string());
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn rendered_sum_example() {
        let mut cv = Canvas::new(32);
        cv.text("4+7=?");
        assert_eq!(read_text(&cv.img).as_deref(), Some("4+7=?"));
    }

    #[test]
    fn all_categories_distinct_options_and_roots() {
        let ps = generate_synthetic_puzzles(8, 32, 1).unwrap();
        assert_eq!(ps.len(), 64);
        for c in SkillCategory::ALL {
            let of_c: Vec<_> = ps.iter().filter(|p| p.category == c).collect();
            assert_eq!(of_c.len(), 8);
            let roots: std::collections::BTreeSet<u32> = of_c.iter().map(|p| p.root_id).collect();
            assert_eq!(roots.len(), ROOTS_PER_CATEGORY as usize);
        }
        for p in &ps {
            let gold = normalize_answer(p.gold_answer());
            let distractors = p.options.iter().filter(|o| normalize_answer(o) != gold).count();
            assert_eq!(distractors, 4);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_puzzles(3, 32, 42).unwrap();
        let b = generate_synthetic_puzzles(3, 32, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_puzzles(3, 32, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn preconditions() {
        assert!(generate_synthetic_puzzles(0, 32, 1).is_err());
        assert!(generate_synthetic_puzzles(1, 8, 1).is_err());
    }
}
