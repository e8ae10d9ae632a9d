//! `topomil ph`: 0-dim persistence diagram of one bag, as CSV on stdout.

use std::path::Path;

use anyhow::anyhow;

use topomil::datasets::load_bag_csv;
use topomil::persistence::{diagram_from_pairing, euclidean_distance_matrix, vr_persistence_0d};

use super::{config_err, runtime_err};
use crate::{CliResult, Space};

pub fn run(data: &Path, bag_id: &str, _space: Space) -> CliResult {
    let bags = load_bag_csv(data).map_err(config_err)?;
    let bag = bags
        .iter()
        .find(|b| b.id == bag_id)
        .ok_or_else(|| config_err(anyhow!("no bag '{bag_id}' in {}", data.display())))?;

    let matrix = euclidean_distance_matrix(&bag.instances).map_err(runtime_err)?;
    let pairing = vr_persistence_0d(&matrix);
    let diagram = diagram_from_pairing(&matrix, &pairing).map_err(runtime_err)?;

    println!("edge_i,edge_j,birth,death");
    for (&(i, j), &(birth, death)) in pairing.edges.iter().zip(&diagram.points) {
        println!("{i},{j},{birth},{death}");
    }
    Ok(())
}
