# OpenReview Scraper 测试包

