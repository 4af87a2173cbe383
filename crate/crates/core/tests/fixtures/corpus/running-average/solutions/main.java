// problem: running-average
import java.io.BufferedReader;
import java.io.InputStreamReader;
import java.util.Locale;
import java.util.StringTokenizer;

public class Main {
    public static void main(String[] args) throws Exception {
        BufferedReader in = new BufferedReader(new InputStreamReader(System.in));
        StringBuilder all = new StringBuilder();
        String line;
        while ((line = in.readLine()) != null) {
            all.append(line).append(' ');
        }
        StringTokenizer st = new StringTokenizer(all.toString());
        int n = Integer.parseInt(st.nextToken());
        long total = 0;
        StringBuilder out = new StringBuilder();
        for (int i = 1; i <= n; i++) {
            total += Long.parseLong(st.nextToken());
            out.append(String.format(Locale.ROOT, "%.6f", (double) total / i)).append('\n');
        }
        System.out.print(out);
    }
}
