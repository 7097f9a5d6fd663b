//! Tabulates how grid cells align with the vision encoder's patch lattice
//! for both supported lattices and a range of grid sizes.

use grid2matrix::geometry::{type_distribution, InteractionType, PatchConfig};

fn main() -> anyhow::Result<()> {
    for patch in [PatchConfig::merger_style(), PatchConfig::pixel_shuffle_style()] {
        println!("image {} px, patch {} px", patch.image_size, patch.patch_len);
        let header: Vec<String> = InteractionType::ALL.iter().map(|t| format!("{:>8}", t.label())).collect();
        println!("   n {}", header.join(""));
        for n in [8, 16, 20, 24, 32, 40, 48, 56, 64] {
            let hist = type_distribution(n, patch)?;
            let shares: Vec<String> = InteractionType::ALL
                .iter()
                .map(|&t| format!("{:7.1}%", hist.get(t) as f64 / hist.total() as f64 * 100.0))
                .collect();
            println!("{n:4} {}", shares.join(""));
        }
        println!();
    }
    Ok(())
}
