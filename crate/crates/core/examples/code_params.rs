//! Check code parameters against a consortium layout.

use dbnode::erasure::CodeParams;

fn main() {
    let base = CodeParams::three_by_two();
    let candidates = [
        ("(6,3), x=3, y=1", base),
        (
            "x=4",
            CodeParams {
                node_failures: 4,
                ..base
            },
        ),
        (
            "y=2",
            CodeParams {
                org_failures: 2,
                ..base
            },
        ),
        ("l=2", CodeParams { groups: 2, ..base }),
    ];
    for (label, params) in candidates {
        let report = params.validate().expect("well-formed parameters");
        println!("{label:<16} {report}");
    }
}
