//! Renders one synthetic hand, prints its joints and writes a preview PNG.
//!
//!     cargo run --example synth_hand -- [seed] [out.png]

use std::sync::Arc;

use handpose::data::synth::SynthConfig;
use handpose::eval::render_overlay;
use handpose::geometry::SkeletonSpec;

fn main() -> handpose::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = args.first().and_then(|s| s.parse().ok()).unwrap_or(7);
    let out = args.get(1).cloned().unwrap_or_else(|| "synth_hand.png".into());

    let sk = Arc::new(SkeletonSpec::msra21());
    let cfg = SynthConfig::default();
    let hand = cfg.sample_hand(&sk, seed, 0)?;

    let fg = hand.image.foreground_pixels().count();
    println!("{}x{} depth image, {fg} hand pixels", hand.image.width(), hand.image.height());
    println!("stretched fingers: {:?}", hand.stretched);
    for (j, p) in hand.pose.joints.iter().enumerate() {
        let finger = sk.finger_chains.iter().position(|c| c[1..].contains(&j));
        let name = finger.map_or("palm", |f| sk.finger_names[f].as_str());
        println!("{j:>2} {name:<7} {:8.1} {:8.1} {:8.1}", p.x, p.y, p.z);
    }
    render_overlay(&hand.image, &hand.pose, &cfg.intrinsics).save(&out)?;
    println!("wrote {out}");
    Ok(())
}
