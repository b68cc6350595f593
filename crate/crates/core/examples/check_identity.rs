//! Which bandwidth schedules make the kernel a strong approximate identity.

use composite_risk::{check_strong_identity, BandwidthSchedule, KernelFamily, KernelSpec};

fn main() -> composite_risk::Result<()> {
    let schedules = [
        BandwidthSchedule::Silverman,
        BandwidthSchedule::Power { a: 1.0, gamma: 0.4 },
        BandwidthSchedule::Power { a: 1.0, gamma: 0.6 },
        BandwidthSchedule::Power { a: 1.0, gamma: 1.0 },
    ];
    for family in [KernelFamily::Uniform, KernelFamily::Gaussian] {
        let kernel = KernelSpec::new(family, 1, 3.0)?;
        for s in &schedules {
            let d = check_strong_identity(s, &kernel, 2.0);
            println!("{family:?} {s}: passes = {}, {}", d.passes, d.detail);
        }
    }
    Ok(())
}
