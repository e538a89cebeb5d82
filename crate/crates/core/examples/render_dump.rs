//! Render every camera of every task at reset and write PNGs to a directory.

use std::path::PathBuf;

use surgbench_core::{default_rig, render, reset_task, TaskName, TaskSpec};

fn main() -> surgbench_core::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "render_dump".into()),
    );
    std::fs::create_dir_all(&out)?;
    for task in TaskName::ALL {
        let spec = TaskSpec::default_for(task);
        let scene = reset_task(&spec, 0)?;
        let rig = default_rig(&spec)?.with_resolution(256);
        for cam in rig.cameras(&scene)? {
            let frame = render(&scene, &cam);
            frame.write_rgb_png(&out.join(format!("{task}_{}.png", cam.id)))?;
        }
    }
    Ok(())
}
