// problem: can-make-square
import java.util.Scanner;

public class Main {
    static boolean canMakeSquare(char[][] grid) {
        for (int i = 0; i < 2; i++) {
            for (int j = 0; j < 2; j++) {
                int whites = 0;
                for (int a = 0; a < 2; a++) {
                    for (int b = 0; b < 2; b++) {
                        if (grid[i + a][j + b] == 'W') {
                            whites++;
                        }
                    }
                }
                if (whites != 2) {
                    return true;
                }
            }
        }
        return false;
    }

    public static void main(String[] args) {
        Scanner sc = new Scanner(System.in);
        char[][] grid = new char[3][];
        for (int r = 0; r < 3; r++) {
            grid[r] = sc.next().toCharArray();
        }
        System.out.println(canMakeSquare(grid) ? "true" : "false");
    }
}
