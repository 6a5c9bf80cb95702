// Writing and reading a tiny IDX image/label pair.

use lowrank::harness::{load_idx, write_idx_images, write_idx_labels};
use lowrank::Result;

pub fn run_example() -> Result<()> {
    let dir = std::env::temp_dir().join(format!("lowrank-idx-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| lowrank::Error::InvalidInput(e.to_string()))?;
    let (images, labels) = (dir.join("images"), dir.join("labels"));
    let pixels: Vec<u8> = (0..3 * 4 * 4).map(|i| (i * 5) as u8).collect();
    write_idx_images(&images, 4, 4, &pixels)?;
    write_idx_labels(&labels, &[1, 7, 9])?;

    let ds = load_idx(&images, &labels)?;
    println!("{} images of {}x{}, labels {:?}", ds.len(), ds.rows, ds.cols, ds.labels);
    println!("first column starts {:?}", &ds.images.column(0)[..4]);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("idx_files example failed");
}
