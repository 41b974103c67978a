// Browser entry point: mount the explorer against the same-origin service.

import { ApiClient } from "./api.js";
import { mountExplorer } from "./app.js";

const root = document.getElementById("app");
if (root) {
  void mountExplorer(root, new ApiClient("")).catch((err) => {
    root.innerHTML = `<p class="boot-error">cannot reach the workbench service: ${String(err)}</p>`;
  });
}
