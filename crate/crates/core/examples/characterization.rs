//! Checks the three characterization conditions on analytic measures and on
//! a vortex-like measure that is not generated by gradients.

use std::f64::consts::PI;

use twoscale::checker::{verify_characterization, FhomFn, Tolerances};
use twoscale::experiment::example_measures;
use twoscale::integrand::TestDictionary;
use twoscale::measure::{Binning, DiscreteMeasure, TwoScaleYoungMeasure};

fn main() -> twoscale::Result<()> {
    // every member the dictionary evaluates here is convex and y-independent,
    // so f_hom is known in closed form; other members are reported untested
    let closed = FhomFn(|f: &twoscale::integrand::Integrand, m: &[f64]| f.closed_form_fhom(m));

    let dict = TestDictionary::standard(1, 1, 2.0)?;
    for (name, nu) in example_measures(0.5, Binning::new(4, 16), 2.0)? {
        let report = verify_characterization(&nu, &dict, &closed, Tolerances::default())?;
        println!("== {name}\n{}", report.table());
    }

    let vortex = TwoScaleYoungMeasure::homogeneous(2, 1, 16, 2.0, |y| {
        DiscreteMeasure::dirac(vec![(2.0 * PI * y[1]).sin(), 0.0])
    })?;
    let dict = TestDictionary::standard(2, 1, 2.0)?;
    let report = verify_characterization(&vortex, &dict, &closed, Tolerances::default())?;
    println!("== vortex\n{}", report.table());
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}
