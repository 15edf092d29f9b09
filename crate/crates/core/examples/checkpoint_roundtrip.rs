//! Save a cloud as a binary PLY checkpoint, load it back, and check that the
//! bytes and the rendering are unchanged.
//!
//! cargo run --release --example checkpoint_roundtrip

use reactsplat::scenesio::random::{random_scene, RandomSceneSpec};
use reactsplat::scenesio::{checkpoint_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_PROPERTIES};
use reactsplat::{render_forward, RenderOptions};

fn main() -> reactsplat::Result<()> {
    let (mut cloud, cams) = random_scene(2, RandomSceneSpec { primitives: 100, width: 64, height: 64, cameras: 1 });
    // checkpoints store f32; round first so the in-memory cloud is representable
    cloud.quantize_f32();

    let path = std::env::temp_dir().join("reactsplat-checkpoint.ply");
    save_checkpoint(&cloud, &path)?;
    let loaded = load_checkpoint(&path)?;
    let same_bytes = checkpoint_bytes(&loaded) == std::fs::read(&path)?;
    let opts = RenderOptions::default();
    let same_render = render_forward(&cloud, &cams[0], &opts) == render_forward(&loaded, &cams[0], &opts);
    println!("{} primitives, properties: {}", loaded.len(), CHECKPOINT_PROPERTIES.join(" "));
    println!("re-encoded bytes identical: {same_bytes}, rendering identical: {same_render}");
    Ok(())
}
