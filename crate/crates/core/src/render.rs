//! Schematic raster rendering of scenes, plus debug overlays.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Point};
use crate::scene::{Method, PickPlaceTask, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    pub background: [u8; 3],
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            background: [236, 232, 222],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Ellipse,
    Bar,
    Rect,
}

fn class_look(class: &str) -> (Shape, [u8; 3]) {
    match class {
        "plate" => (Shape::Ellipse, [250, 250, 250]),
        "bowl" => (Shape::Ellipse, [70, 130, 180]),
        "pot" => (Shape::Ellipse, [90, 90, 100]),
        "pan" => (Shape::Ellipse, [40, 40, 40]),
        "cup" => (Shape::Ellipse, [200, 60, 60]),
        "spoon" => (Shape::Bar, [190, 190, 200]),
        "fork" => (Shape::Bar, [160, 170, 150]),
        "knife" => (Shape::Bar, [120, 120, 130]),
        "whisk" => (Shape::Bar, [220, 180, 60]),
        "cutting_board" => (Shape::Rect, [170, 120, 70]),
        "bottle" => (Shape::Rect, [60, 150, 80]),
        _ => (Shape::Rect, [128, 128, 128]),
    }
}

/// Whether the pixel center `(px, py)` lies in `shape` inscribed in `b`.
fn inside(shape: Shape, b: &BoundingBox, px: f64, py: f64) -> bool {
    let in_box = px >= b.x_min() && px < b.x_max() && py >= b.y_min() && py < b.y_max();
    if !in_box {
        return false;
    }
    let c = b.center();
    let (rx, ry) = (b.width() / 2.0, b.height() / 2.0);
    match shape {
        Shape::Rect => true,
        Shape::Ellipse => {
            let (dx, dy) = ((px - c.x) / rx, (py - c.y) / ry);
            dx * dx + dy * dy <= 1.0
        }
        Shape::Bar => {
            // Capsule along the long axis.
            let r = rx.min(ry);
            let (ax, ay) = if rx >= ry { (rx - r, 0.0) } else { (0.0, ry - r) };
            let t = if ax > 0.0 {
                ((px - c.x) / ax).clamp(-1.0, 1.0)
            } else if ay > 0.0 {
                ((py - c.y) / ay).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (c.x + t * ax, c.y + t * ay);
            (px - qx).powi(2) + (py - qy).powi(2) <= r * r
        }
    }
}

fn fill(img: &mut RgbImage, b: &BoundingBox, shape: Shape, color: [u8; 3]) {
    let (w, h) = img.dimensions();
    let x0 = b.x_min().floor().max(0.0) as u32;
    let y0 = b.y_min().floor().max(0.0) as u32;
    let x1 = (b.x_max().ceil() as u32).min(w);
    let y1 = (b.y_max().ceil() as u32).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            if inside(shape, b, x as f64 + 0.5, y as f64 + 0.5) {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

/// Flat background with each object drawn inside its box, largest first so
/// that contained objects end up on top.
pub fn render_scene(scene: &Scene, style: &RenderStyle) -> RgbImage {
    let mut img = RgbImage::from_pixel(scene.width(), scene.height(), Rgb(style.background));
    let mut dets: Vec<_> = scene.detections().iter().collect();
    dets.sort_by(|a, b| b.bbox.area().total_cmp(&a.bbox.area()).then_with(|| a.id.cmp(&b.id)));
    for d in dets {
        let (shape, color) = class_look(d.class.as_str());
        fill(&mut img, &d.bbox, shape, color);
    }
    img
}

// 3x5 glyphs, one row per entry, high bit on the left.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'B' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'C' => [0b011, 0b100, 0b100, 0b100, 0b011],
        'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'F' => [0b111, 0b100, 0b110, 0b100, 0b100],
        'G' => [0b011, 0b100, 0b101, 0b101, 0b011],
        'H' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'I' => [0b111, 0b010, 0b010, 0b010, 0b111],
        'J' => [0b001, 0b001, 0b001, 0b101, 0b010],
        'K' => [0b101, 0b101, 0b110, 0b101, 0b101],
        'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'M' => [0b101, 0b111, 0b111, 0b101, 0b101],
        'N' => [0b110, 0b101, 0b101, 0b101, 0b101],
        'O' => [0b010, 0b101, 0b101, 0b101, 0b010],
        'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
        'Q' => [0b010, 0b101, 0b101, 0b110, 0b011],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'U' => [0b101, 0b101, 0b101, 0b101, 0b111],
        'V' => [0b101, 0b101, 0b101, 0b101, 0b010],
        'W' => [0b101, 0b101, 0b111, 0b111, 0b101],
        'X' => [0b101, 0b101, 0b010, 0b101, 0b101],
        'Y' => [0b101, 0b101, 0b010, 0b010, 0b010],
        'Z' => [0b111, 0b001, 0b010, 0b100, 0b111],
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b110, 0b001, 0b010, 0b100, 0b111],
        '3' => [0b110, 0b001, 0b010, 0b001, 0b110],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b110, 0b001, 0b110],
        '6' => [0b011, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b110],
        '_' => [0, 0, 0, 0, 0b111],
        '-' => [0, 0, 0b111, 0, 0],
        _ => [0; 5],
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    const SCALE: i64 = 2;
    for (k, ch) in text.chars().enumerate() {
        let ox = x + k as i64 * 4 * SCALE;
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    for sy in 0..SCALE {
                        for sx in 0..SCALE {
                            put(img, ox + col * SCALE + sx, y + row as i64 * SCALE + sy, color);
                        }
                    }
                }
            }
        }
    }
}

fn draw_line(img: &mut RgbImage, from: Point, to: Point, color: Rgb<u8>) {
    let steps = from.distance(&to).ceil().max(1.0) as i64;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = from.x + (to.x - from.x) * t;
        let y = from.y + (to.y - from.y) * t;
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            put(img, x.floor() as i64 + dx, y.floor() as i64 + dy, color);
        }
    }
}

fn draw_rect(img: &mut RgbImage, b: &BoundingBox, color: Rgb<u8>) {
    let (x0, y0) = (b.x_min(), b.y_min());
    let (x1, y1) = (b.x_max() - 1.0, b.y_max() - 1.0);
    let p = |x: f64, y: f64| Point { x, y };
    draw_line(img, p(x0, y0), p(x1, y0), color);
    draw_line(img, p(x1, y0), p(x1, y1), color);
    draw_line(img, p(x1, y1), p(x0, y1), color);
    draw_line(img, p(x0, y1), p(x0, y0), color);
}

fn draw_arrow(img: &mut RgbImage, from: Point, to: Point, color: Rgb<u8>) {
    draw_line(img, from, to, color);
    let len = from.distance(&to);
    if len < 1.0 {
        return;
    }
    let (ux, uy) = ((to.x - from.x) / len, (to.y - from.y) / len);
    let head = 10.0_f64.min(len / 2.0);
    for side in [-1.0, 1.0] {
        let (hx, hy) = (-ux * head + side * -uy * head * 0.5, -uy * head + side * ux * head * 0.5);
        draw_line(img, to, Point { x: to.x + hx, y: to.y + hy }, color);
    }
}

pub fn method_color(method: Method) -> Rgb<u8> {
    match method {
        Method::Geometric => Rgb([0, 204, 0]),
        Method::Transition => Rgb([204, 0, 204]),
        Method::Truth => Rgb([0, 0, 0]),
    }
}

/// Draws labelled boxes and one arrow per task, from the picked object's
/// center to its target's center, colored by method.
pub fn overlay(image: &mut RgbImage, scene: &Scene, tasks: &[PickPlaceTask]) -> Result<(), String> {
    let box_color = Rgb([230, 40, 40]);
    for d in scene.detections() {
        draw_rect(image, &d.bbox, box_color);
        draw_text(image, d.bbox.x_min() as i64 + 2, d.bbox.y_min() as i64 + 2, &d.id, box_color);
    }
    for t in tasks {
        let find = |id: &str| {
            scene
                .get(id)
                .map(|d| d.bbox.center())
                .ok_or_else(|| format!("task refers to '{id}', which is not in the scene"))
        };
        draw_arrow(image, find(&t.picked)?, find(&t.target)?, method_color(t.method));
    }
    Ok(())
}
