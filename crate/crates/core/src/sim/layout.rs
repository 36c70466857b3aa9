//! Box placement primitives for synthetic scenes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::BoundingBox;

/// Frame bounds with a small inner border.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    pub width: f64,
    pub height: f64,
    pub border: f64,
}

impl Frame {
    pub fn holds(&self, b: &BoundingBox) -> bool {
        b.x_min() >= self.border
            && b.y_min() >= self.border
            && b.x_max() <= self.width - self.border
            && b.y_max() <= self.height - self.border
    }

    /// Uniform position for a `w x h` box, if it fits at all.
    pub fn random_box(&self, rng: &mut ChaCha8Rng, w: f64, h: f64) -> Option<BoundingBox> {
        let x_hi = self.width - self.border - w;
        let y_hi = self.height - self.border - h;
        if x_hi <= self.border || y_hi <= self.border {
            return None;
        }
        let x = rng.random_range(self.border..x_hi);
        let y = rng.random_range(self.border..y_hi);
        BoundingBox::new(x, y, x + w, y + h).ok()
    }
}

/// `b` keeps at least `gap` pixels from every box in `others`.
pub(crate) fn clear_of<'a>(
    b: &BoundingBox,
    gap: f64,
    others: impl IntoIterator<Item = &'a BoundingBox>,
) -> bool {
    let grown = b.inflate(gap);
    others
        .into_iter()
        .all(|o| grown.intersection_area(o) == 0.0)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Box strictly inside `target`, sized by per-axis factors from `scale`.
pub(crate) fn place_inside(
    rng: &mut ChaCha8Rng,
    target: &BoundingBox,
    scale: (f64, f64),
) -> BoundingBox {
    let w = target.width() * uniform(rng, scale);
    let h = target.height() * uniform(rng, scale);
    let slack_x = target.width() - w;
    let slack_y = target.height() - h;
    let x = target.x_min() + slack_x * uniform(rng, (0.2, 0.8));
    let y = target.y_min() + slack_y * uniform(rng, (0.2, 0.8));
    BoundingBox::new(x, y, x + w, y + h).expect("positive size")
}

/// Acceptance window for a box resting partly on its target.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OnWindow {
    /// Allowed covered fraction of the placed box, `[lo, hi)`.
    pub covered: (f64, f64),
    /// Minimum IoU with the target.
    pub min_iou: f64,
}

/// A `w x h` box overlapping `target` inside the window, by rejection.
pub(crate) fn place_on(
    rng: &mut ChaCha8Rng,
    target: &BoundingBox,
    w: f64,
    h: f64,
    window: OnWindow,
    tries: usize,
) -> Option<BoundingBox> {
    let c = target.center();
    let reach_x = (target.width() + w) / 2.0;
    let reach_y = (target.height() + h) / 2.0;
    for _ in 0..tries {
        let cx = c.x + rng.random_range(-reach_x..reach_x);
        let cy = c.y + rng.random_range(-reach_y..reach_y);
        let Ok(b) = BoundingBox::from_center(cx, cy, w, h) else {
            continue;
        };
        let f = b.covered_fraction(target);
        if f >= window.covered.0 && f < window.covered.1 && b.iou(target) > window.min_iou {
            return Some(b);
        }
    }
    None
}
