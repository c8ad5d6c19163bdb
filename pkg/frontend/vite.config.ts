import react from "@vitejs/plugin-react";
import { defineConfig } from "vite";

// The dev server proxies API calls to a locally running service
// (`bioquery serve` or `bioquery demo`).
export default defineConfig({
  plugins: [react()],
  server: {
    proxy: {
      "/api": {
        target: process.env.BIOQUERY_API_ORIGIN ?? "http://127.0.0.1:8600",
        changeOrigin: true,
      },
    },
  },
});
