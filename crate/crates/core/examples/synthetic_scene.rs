//! Generate every synthetic preset and load it back as a scene bundle.
//!
//! cargo run --release --example synthetic_scene -- [out-dir]

use std::path::PathBuf;

use reactsplat::scenesio::{generate_synthetic_scene, load_scene, SyntheticPreset};

fn main() -> reactsplat::Result<()> {
    let root = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("reactsplat-scenes"), PathBuf::from);
    for preset in SyntheticPreset::ALL {
        let dir = generate_synthetic_scene(preset, 0, &root.join(preset.name()))?;
        let scene = load_scene(&dir)?;
        println!(
            "{:<22} {} cameras ({} train / {} test), {} initial points, extent {:.3} -> {}",
            preset.name(),
            scene.cameras.len(),
            scene.train.len(),
            scene.test.len(),
            scene.initial_points.len(),
            scene.scene_extent,
            dir.display()
        );
    }
    Ok(())
}
