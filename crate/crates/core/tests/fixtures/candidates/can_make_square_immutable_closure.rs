// problem: can-make-square
use std::io::Read;

fn can_make_square(grid: Vec<Vec<char>>) -> bool {
    for i in 0..2 {
        for j in 0..2 {
            let mut res = 0;
            let calc_res = |r: char| {
                if r == 'W' {
                    res += 1;
                }
            };
            calc_res(grid[i][j]);
            calc_res(grid[i][j + 1]);
            calc_res(grid[i + 1][j]);
            calc_res(grid[i + 1][j + 1]);
            if res != 2 {
                return true;
            }
        }
    }
    false
}

fn main() {
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    let grid: Vec<Vec<char>> = input.split_whitespace().take(3).map(|r| r.chars().collect()).collect();
    println!("{}", if can_make_square(grid) { "true" } else { "false" });
}
