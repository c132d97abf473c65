//! The particle system with annihilation: the attracting pair, the
//! symmetric triple collision, and a repulsive pair that never collides.

use peierls::particles::{self, EvolveControls, ParticleState};

fn main() -> peierls::Result<()> {
    let controls = EvolveControls::default();

    // (+,-) at distance 1 collides at T1 = D^2/(4 c0) = 1/4
    let pair = ParticleState::new(vec![-0.5, 0.5], vec![1, -1], 1.0, 0.0)?;
    let rec = particles::evolve(&pair, 1.0, &controls)?;
    let ev = &rec.events[0];
    println!("attracting pair: collision at t = {:.6} (exact 0.25), x = {:.2e}", ev.time, ev.location);
    println!("  removed {:?}, survivors left: {}", ev.removed, rec.final_state.survivors.len());
    println!("  step function after the event: v(0.5, 0) = {}", particles::step_function(&rec, 0.5, 0.0));
    println!(
        "  envelope at the collision point: v*({:.4}, {:.1e}) = {}",
        ev.time,
        ev.location,
        particles::upper_envelope(&rec, ev.time, ev.location)
    );

    // (+,-,+) at spacing 1/2: a triple collision, one survivor
    let triple = ParticleState::new(vec![-0.5, 0.0, 0.5], vec![1, -1, 1], 1.0, 0.0)?;
    let rec = particles::evolve(&triple, 1.0, &controls)?;
    let ev = &rec.events[0];
    println!("\nsymmetric triple: collision at t = {:.6} (exact 0.25)", ev.time);
    println!("  cluster {:?}, survivor {:?}", ev.cluster, ev.survivor);
    println!("  survivor position afterwards: {:.2e}", rec.position(0, 1.0));

    // (+,+) repels forever; the center of mass is conserved
    let same = ParticleState::new(vec![0.0, 1.0], vec![1, 1], 1.0, 0.0)?;
    let rec = particles::evolve(&same, 10.0, &controls)?;
    println!("\nrepulsive pair after t = 10: positions ({:.4}, {:.4}), events: {}",
        rec.position(0, 10.0), rec.position(1, 10.0), rec.events.len());
    Ok(())
}
