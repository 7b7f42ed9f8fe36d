use std::path::Path;

use image::{GrayImage, Luma};
use simdiff::geometry::WorldPointSet;
use simdiff::io::write_range_image;
use simdiff::tasks::TaskOutcome;
use simdiff::RangeImage;

/// Depth and remission planes as 8-bit grayscale, invalid pixels black.
pub fn range_image_png(img: &RangeImage, remission: bool) -> GrayImage {
    let (h, w) = img.dims();
    GrayImage::from_fn(w as u32, h as u32, |u, v| {
        let value = img
            .get(v as usize, u as usize)
            .map_or(0.0, |(d, r)| if remission { r } else { d });
        Luma([(value.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

/// Top-down scatter of a point set, square and centered on the points' bounding box.
pub fn top_down_png(points: &WorldPointSet, size: u32) -> GrayImage {
    let mut img = GrayImage::new(size, size);
    if points.is_empty() {
        return img;
    }
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for p in &points.points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
    let scale = (size - 1) as f64 / span;
    for p in &points.points {
        let x = ((p.x - lo[0]) * scale) as u32;
        let y = ((hi[1] - p.y) * scale) as u32;
        if x < size && y < size {
            img.put_pixel(x, y, Luma([255]));
        }
    }
    img
}

pub fn render_outputs(outcome: &TaskOutcome, dir: &Path) -> simdiff::Result<()> {
    std::fs::create_dir_all(dir)?;
    let save = |img: GrayImage, name: String| {
        img.save(dir.join(&name))
            .map_err(|e| simdiff::Error::Io(std::io::Error::other(format!("{name}: {e}"))))
    };
    for (k, view) in outcome.views.iter().enumerate() {
        write_range_image(&view.output, dir.join(format!("view{k}.sdri")))?;
        save(range_image_png(&view.output, false), format!("view{k}_depth.png"))?;
        save(range_image_png(&view.output, true), format!("view{k}_remission.png"))?;
        save(range_image_png(&view.condition, false), format!("view{k}_condition.png"))?;
    }
    if let Some(world) = &outcome.world {
        save(top_down_png(world, 512), "top_down.png".into())?;
    }
    Ok(())
}
