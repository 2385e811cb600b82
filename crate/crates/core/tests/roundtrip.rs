mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use alns_mip::mps::{parse_mps, parse_solution_file, write_mps, write_solution_file};

use common::{random_feasible, random_instance};

#[test]
fn generated_instances_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let inst = random_instance(&mut rng);
        let text = write_mps(&inst);
        let again = parse_mps(text.as_bytes()).unwrap_or_else(|e| panic!("instance {i}: {e}\n{text}"));
        assert_eq!(again, inst, "instance {i}");
        assert_eq!(write_mps(&again), text, "instance {i}: writer is not a fixed point");
    }
}

#[test]
fn solution_files_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let inst = random_instance(&mut rng);
        let Some(state) = random_feasible(&inst, &mut rng) else { continue };
        let text = write_solution_file(&inst, state.values(), Some("feasible"));
        let sol = parse_solution_file(&text).unwrap();
        assert_eq!(sol.to_dense(&inst), state.values());
        assert_eq!(sol.status.as_deref(), Some("feasible"));
        let f = sol.objective.unwrap();
        assert!((f - inst.evaluate_objective(state.values()).unwrap()).abs() < 1e-9);
    }
}
