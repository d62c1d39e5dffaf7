import { Api } from './api.js';
import { PlayApp } from './app.js';

const root = document.getElementById('app');
if (root) {
  // served from the same origin as the API, so relative paths suffice
  const app = new PlayApp(root, new Api(''));
  void app.init();
}
