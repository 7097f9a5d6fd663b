//! Prints the transcription prompt for a 6x6 grid with 4 colors and the
//! generation budget across grid sizes.

use grid2matrix::prompt::{build_prompt, max_tokens, ColorMapping, MAX_TOKENS_CAP};
use grid2matrix::GridSpec;

fn main() -> anyhow::Result<()> {
    let spec = GridSpec::new(6, 4)?;
    let mapping = ColorMapping::from_palette(&spec.active_palette(), 4)?;
    println!("{}\n", build_prompt(6, 6, &mapping)?);

    println!("side  max_tokens");
    for side in [3, 6, 12, 20, 21, 32, 64] {
        let budget = max_tokens(side, side);
        let capped = if budget == MAX_TOKENS_CAP { " (cap)" } else { "" };
        println!("{side:4}  {budget}{capped}");
    }
    Ok(())
}
