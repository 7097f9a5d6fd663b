//! Runs the cascading parser over typical model replies for a 2x2 grid and
//! shows which stage accepted each one, or why it failed.

use grid2matrix::parser::parse_cascade;

fn main() {
    let replies = [
        "[[0, 1], [2, 0]]",
        "```python\n[[0, 1],\n [2, 0]]\n```",
        "ROW2=[2, 0]\nROW1=[0, 1]",
        "Sure! The grid is [[0,1],[2,0]].",
        "0 1 2",
        "[[0, 1], [2, 0], [1, 1]]",
        "I cannot see the image.",
    ];
    for reply in replies {
        let outcome = parse_cascade(reply, 2, 2);
        println!("{:45} -> {}", format!("{reply:?}"), serde_json::to_string(&outcome).unwrap());
    }
}
