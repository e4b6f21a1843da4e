//! Run a scenario config (default: the laser on/off switching protocol) and
//! write its CSV outputs plus a checksum manifest.

use ioncrystal::scenario::Scenario;

fn main() -> ioncrystal::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/switching.cfg").into());
    let scenario = Scenario::load(std::path::Path::new(&path), None)?;
    for w in scenario.warnings() {
        eprintln!("warning: {w}");
    }
    let out = scenario.run()?;
    out.write(std::path::Path::new("scenario_out"))?;
    print!("{}", out.manifest());
    Ok(())
}
