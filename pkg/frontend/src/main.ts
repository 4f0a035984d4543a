import { SuggestClient } from "./client.js";
import { RefineController } from "./controller.js";

const root = document.getElementById("app");
if (root) {
  new RefineController(root, new SuggestClient());
}
