//! Minimal SVG rendering of worlds and episodes.

use std::fmt::Write;

use crate::grid::Cell;
use crate::gridworld::World;

use super::EpisodeRecord;

const PX_PER_M: f64 = 40.0;

fn header(world: &World) -> String {
    let (w, h) = (world.width_m() * PX_PER_M, world.height_m() * PX_PER_M);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n"
    );
    s += &format!("<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>\n");
    // Obstacles as horizontal runs so large walls stay one element.
    let g = world.obstacle_grid();
    let c = world.cell_size() * PX_PER_M;
    for row in 0..g.height() {
        let mut col = 0;
        while col < g.width() {
            if !*g.get(Cell::new(row, col)) {
                col += 1;
                continue;
            }
            let start = col;
            while col < g.width() && *g.get(Cell::new(row, col)) {
                col += 1;
            }
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#444\"/>",
                start as f64 * c,
                row as f64 * c,
                (col - start) as f64 * c,
                c
            );
        }
    }
    s
}

pub fn render_world(world: &World) -> String {
    header(world) + "</svg>\n"
}

/// Map, path in red, long-term goals as blue circles, goal as a green dot.
pub fn render_episode(world: &World, rec: &EpisodeRecord) -> String {
    let mut s = header(world);
    let (w, h) = (world.width_m(), world.height_m());
    for g in &rec.long_term_goals {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"6\" fill=\"none\" stroke=\"#1f5fd6\" stroke-width=\"1.5\"/>",
            g.gx * w * PX_PER_M,
            g.gy * h * PX_PER_M
        );
    }
    let mut pts = format!("{:.1},{:.1}", rec.task.start_pose.x * PX_PER_M, rec.task.start_pose.y * PX_PER_M);
    for p in &rec.poses {
        let _ = write!(pts, " {:.1},{:.1}", p.x * PX_PER_M, p.y * PX_PER_M);
    }
    let _ = writeln!(s, "<polyline points=\"{pts}\" fill=\"none\" stroke=\"#d62020\" stroke-width=\"2\"/>");
    let _ = writeln!(
        s,
        "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"#222\"/>",
        rec.task.start_pose.x * PX_PER_M,
        rec.task.start_pose.y * PX_PER_M
    );
    let _ = writeln!(
        s,
        "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"5\" fill=\"#18a018\"/>",
        rec.task.goal_pose.x * PX_PER_M,
        rec.task.goal_pose.y * PX_PER_M
    );
    s + "</svg>\n"
}
